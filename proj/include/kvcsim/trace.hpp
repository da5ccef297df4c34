/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace kvcsim {

// Block size used by the open trace's hash_ids chaining.
inline constexpr std::int64_t kTraceBlockSize = 512;

// One trace entry. hash_ids are prefix-chained block IDs: two requests whose
// id lists share a prefix share exactly that token prefix.
struct RequestRecord {
  std::int64_t request_id = 0;    // assigned by input order
  std::int64_t timestamp_ms = 0;  // milliseconds since trace start
  std::int64_t input_length = 0;  // prompt tokens
  std::int64_t output_length = 0; // generated tokens
  std::vector<std::int64_t> hash_ids;

  friend bool operator==(const RequestRecord&, const RequestRecord&) = default;
};

// Expected block count for a record: ceil(input_length / block_size).
std::int64_t expected_block_count(std::int64_t input_length,
                                  std::int64_t block_size = kTraceBlockSize);

using WarningSink = std::function<void(const std::string&)>;

// Parses whitespace-separated JSON objects (JSON-lines or pretty-printed).
// Records come back sorted by timestamp, ties broken by input order;
// request_id is the input-order index. Unknown fields raise one warning per
// field name. Malformed JSON throws ParseError with a line number; a bad or
// missing field throws ValidationError naming the field.
std::vector<RequestRecord> parse_trace(std::istream& in, const WarningSink& warn = {});
std::vector<RequestRecord> parse_trace(const std::string& text, const WarningSink& warn = {});
std::vector<RequestRecord> load_trace_file(const std::string& path, const WarningSink& warn = {});

// JSON-lines, one record per line, fields timestamp/input_length/output_length/hash_ids.
void serialize_trace(const std::vector<RequestRecord>& records, std::ostream& out);
std::string serialize_trace_string(const std::vector<RequestRecord>& records);

// Divides every timestamp by `speedup` (integer floor); order is preserved.
std::vector<RequestRecord> rescale_replay(std::vector<RequestRecord> records, double speedup);

// Fixed token count when min == max, otherwise uniform in [min, max].
struct LengthSpec {
  std::int64_t min_tokens = 1;
  std::int64_t max_tokens = 1;

  static LengthSpec fixed(std::int64_t n) { return LengthSpec{n, n}; }
  bool is_fixed() const { return min_tokens == max_tokens; }
};

enum class ArrivalProcess { kPoisson, kTimestampReplay };

struct WorkloadSpec {
  ArrivalProcess arrival = ArrivalProcess::kPoisson;
  double rate_rps = 1.0;            // Poisson arrival rate, requests/second
  LengthSpec input_length = LengthSpec::fixed(1);
  LengthSpec output_length = LengthSpec::fixed(1);
  double cache_ratio = 0.0;         // fraction of each request's blocks from the hot chain
  std::int64_t request_count = 0;
  std::uint64_t seed = 0;
  std::int64_t block_size = kTraceBlockSize;
};

// Synthetic workload: Poisson arrivals, the first floor(cache_ratio * blocks)
// ids of every request taken from one shared hot chain, the rest globally
// fresh. Deterministic given the seed.
std::vector<RequestRecord> generate_workload(const WorkloadSpec& spec);

}  // namespace kvcsim
