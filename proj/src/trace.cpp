/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kvcsim/errors.hpp"
#include "kvcsim/rand.hpp"

namespace kvcsim {

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

std::int64_t require_int_field(const nlohmann::json& obj, const char* field,
                               std::size_t line, std::int64_t min_value) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw ValidationError("line " + std::to_string(line) + ": missing field '" + field + "'");
  }
  if (!it->is_number_integer() && !it->is_number_unsigned()) {
    throw ValidationError("line " + std::to_string(line) + ": field '" + field +
                          "' must be an integer");
  }
  const std::int64_t value = it->get<std::int64_t>();
  if (value < min_value) {
    throw ValidationError("line " + std::to_string(line) + ": field '" + field + "' is " +
                          std::to_string(value) + ", must be >= " + std::to_string(min_value));
  }
  return value;
}

}  // namespace

std::int64_t expected_block_count(std::int64_t input_length, std::int64_t block_size) {
  return (input_length + block_size - 1) / block_size;
}

std::vector<RequestRecord> parse_trace(const std::string& text, const WarningSink& warn) {
  std::vector<RequestRecord> records;
  std::set<std::string> warned_fields;

  std::istringstream in(text);
  in >> std::ws;
  while (in.good() && in.peek() != std::char_traits<char>::eof()) {
    const auto start = static_cast<std::size_t>(in.tellg());
    const std::size_t line = line_of_offset(text, start);

    nlohmann::json obj;
    try {
      in >> obj;
    } catch (const nlohmann::json::parse_error& e) {
      const std::size_t err_line =
          line_of_offset(text, start + (e.byte > 0 ? e.byte - 1 : 0));
      throw ParseError("line " + std::to_string(err_line) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw ValidationError("line " + std::to_string(line) + ": record must be a JSON object");
    }

    RequestRecord rec;
    rec.request_id = static_cast<std::int64_t>(records.size());
    rec.timestamp_ms = require_int_field(obj, "timestamp", line, 0);
    rec.input_length = require_int_field(obj, "input_length", line, 1);
    rec.output_length = require_int_field(obj, "output_length", line, 1);

    auto ids = obj.find("hash_ids");
    if (ids == obj.end()) {
      throw ValidationError("line " + std::to_string(line) + ": missing field 'hash_ids'");
    }
    if (!ids->is_array()) {
      throw ValidationError("line " + std::to_string(line) +
                            ": field 'hash_ids' must be an array of integers");
    }
    rec.hash_ids.reserve(ids->size());
    for (const auto& id : *ids) {
      if (!id.is_number_integer() && !id.is_number_unsigned()) {
        throw ValidationError("line " + std::to_string(line) +
                              ": field 'hash_ids' must be an array of integers");
      }
      rec.hash_ids.push_back(id.get<std::int64_t>());
    }
    const std::int64_t want = expected_block_count(rec.input_length);
    if (static_cast<std::int64_t>(rec.hash_ids.size()) != want) {
      throw ValidationError("line " + std::to_string(line) + ": field 'hash_ids' has " +
                            std::to_string(rec.hash_ids.size()) + " ids, expected ceil(" +
                            std::to_string(rec.input_length) + "/" +
                            std::to_string(kTraceBlockSize) + ") = " + std::to_string(want));
    }

    for (const auto& [key, value] : obj.items()) {
      if (key != "timestamp" && key != "input_length" && key != "output_length" &&
          key != "hash_ids" && warned_fields.insert(key).second && warn) {
        warn("ignoring unknown trace field '" + key + "' (first seen on line " +
             std::to_string(line) + ")");
      }
    }

    records.push_back(std::move(rec));
    in >> std::ws;
  }

  // Ties keep input order.
  std::stable_sort(records.begin(), records.end(),
                   [](const RequestRecord& a, const RequestRecord& b) {
                     return a.timestamp_ms < b.timestamp_ms;
                   });
  return records;
}

std::vector<RequestRecord> parse_trace(std::istream& in, const WarningSink& warn) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str(), warn);
}

std::vector<RequestRecord> load_trace_file(const std::string& path, const WarningSink& warn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open trace file: " + path);
  }
  return parse_trace(in, warn);
}

void serialize_trace(const std::vector<RequestRecord>& records, std::ostream& out) {
  for (const auto& rec : records) {
    nlohmann::ordered_json obj;
    obj["timestamp"] = rec.timestamp_ms;
    obj["input_length"] = rec.input_length;
    obj["output_length"] = rec.output_length;
    obj["hash_ids"] = rec.hash_ids;
    out << obj.dump() << '\n';
  }
}

std::string serialize_trace_string(const std::vector<RequestRecord>& records) {
  std::ostringstream out;
  serialize_trace(records, out);
  return out.str();
}

std::vector<RequestRecord> rescale_replay(std::vector<RequestRecord> records, double speedup) {
  if (!(speedup > 0.0)) {
    throw ValidationError("replay speedup must be > 0, got " + std::to_string(speedup));
  }
  for (auto& rec : records) {
    rec.timestamp_ms =
        static_cast<std::int64_t>(std::floor(static_cast<double>(rec.timestamp_ms) / speedup));
  }
  return records;
}

std::vector<RequestRecord> generate_workload(const WorkloadSpec& spec) {
  if (spec.arrival != ArrivalProcess::kPoisson) {
    throw ValidationError("generate_workload needs a poisson arrival process; "
                          "timestamp_replay comes from a trace file");
  }
  if (!(spec.rate_rps > 0.0)) {
    throw ValidationError("workload rate_rps must be > 0");
  }
  if (spec.cache_ratio < 0.0 || spec.cache_ratio > 1.0) {
    throw ValidationError("workload cache_ratio must be in [0, 1]");
  }
  if (spec.request_count < 0) {
    throw ValidationError("workload request_count must be >= 0");
  }
  if (spec.input_length.min_tokens < 1 || spec.input_length.min_tokens > spec.input_length.max_tokens ||
      spec.output_length.min_tokens < 1 || spec.output_length.min_tokens > spec.output_length.max_tokens) {
    throw ValidationError("workload length bounds must satisfy 1 <= min <= max");
  }
  if (spec.block_size < 1) {
    throw ValidationError("workload block_size must be >= 1");
  }

  Rng rng(spec.seed);
  const double mean_gap_ms = 1000.0 / spec.rate_rps;

  std::vector<std::int64_t> hot_chain;  // shared prefix ids, grown on demand
  std::int64_t next_id = 0;
  double clock_ms = 0.0;

  std::vector<RequestRecord> records;
  records.reserve(static_cast<std::size_t>(spec.request_count));
  for (std::int64_t i = 0; i < spec.request_count; ++i) {
    RequestRecord rec;
    rec.request_id = i;
    clock_ms += rng.exponential(mean_gap_ms);
    rec.timestamp_ms = static_cast<std::int64_t>(std::floor(clock_ms));
    rec.input_length = spec.input_length.is_fixed()
                           ? spec.input_length.min_tokens
                           : rng.uniform_int(spec.input_length.min_tokens,
                                             spec.input_length.max_tokens);
    rec.output_length = spec.output_length.is_fixed()
                            ? spec.output_length.min_tokens
                            : rng.uniform_int(spec.output_length.min_tokens,
                                              spec.output_length.max_tokens);

    const std::int64_t blocks = expected_block_count(rec.input_length, spec.block_size);
    const auto shared =
        static_cast<std::int64_t>(std::floor(spec.cache_ratio * static_cast<double>(blocks)));
    while (static_cast<std::int64_t>(hot_chain.size()) < shared) {
      hot_chain.push_back(next_id++);
    }
    rec.hash_ids.reserve(static_cast<std::size_t>(blocks));
    rec.hash_ids.assign(hot_chain.begin(), hot_chain.begin() + shared);
    for (std::int64_t b = shared; b < blocks; ++b) {
      rec.hash_ids.push_back(next_id++);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace kvcsim
