/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "kvcsim/kvcache.hpp"
#include "kvcsim/perf_model.hpp"
#include "kvcsim/trace.hpp"

namespace kvcsim {

class Rng;

struct SLOConfig {
  double l_ttft_ms = 30000.0;   // TTFT bound
  double l_tbt_ms = 100.0;      // per-token TBT bound
  double ttft_multiplier = 10.0;  // normalized-reporting factors
  double tbt_multiplier = 5.0;

  void validate() const;
};

struct ConductorConfig {
  double kvcache_balancing_threshold = 4.0;  // must be > 1
  std::int64_t block_size = kTraceBlockSize;

  void validate() const;
};

enum class SchedulerChoice { kRandom, kLoadBalance, kCacheAware, kKvcacheCentric };

const char* to_string(SchedulerChoice choice);
std::optional<SchedulerChoice> scheduler_choice_from_string(const std::string& name);

// Read-only view of one prefill instance for a scheduling decision.
struct PrefillSnapshot {
  int id = 0;
  const CachePool* cache = nullptr;
  double busy_until_ms = 0.0;         // compute occupancy
  double sender_busy_until_ms = 0.0;  // outbound KVCache link occupancy
  double queued_work_ms = 0.0;        // sum of queued prefill estimates
};

// Read-only view of one decoding instance.
struct DecodeSnapshot {
  int id = 0;
  std::int64_t batch_size = 0;
  std::int64_t resident_kv_tokens = 0;
  std::optional<std::int64_t> max_kv_tokens;  // VRAM bound, unbounded if unset
};

struct BestPrefixMatch {
  std::size_t prefix_blocks = 0;
  int instance_id = 0;
};

// Maximum match_prefix over the pool; ties go to the lowest instance id.
BestPrefixMatch find_best_prefix_match(std::span<const PrefillSnapshot> pool,
                                       std::span<const BlockId> block_keys);

struct DecodeSelection {
  int instance_id = 0;
  double predicted_tbt_ms = 0.0;
};

// Hypothetically adds the request to every decoding batch and returns the
// instance with the smallest predicted iteration time (ties: lowest id).
DecodeSelection select_decoding_instance(std::span<const DecodeSnapshot> pool,
                                         std::int64_t request_kv_tokens,
                                         const PerfModelParams& params);

enum class RejectReason { kNone, kTtftSlo, kTbtSlo };

const char* to_string(RejectReason reason);

struct MigrationPlan {
  int source_id = 0;           // instance holding the best prefix
  std::size_t prefix_blocks = 0;  // chain prefix [0, prefix_blocks) to replicate
};

struct SchedulingDecision {
  bool accepted = false;
  RejectReason reject_reason = RejectReason::kNone;

  int prefill_id = -1;
  int decode_id = -1;
  std::size_t local_prefix_blocks = 0;  // chosen instance's own match
  std::size_t used_prefix_blocks = 0;   // prefix the prefill will actually reuse
  std::optional<MigrationPlan> migration;

  double queue_ms = 0.0;
  double transfer_ms = 0.0;
  double exec_ms = 0.0;  // prefill execution estimate with used_prefix_blocks
  double estimated_ttft_ms = 0.0;
  double estimated_tbt_ms = 0.0;
};

struct ScheduleContext {
  std::span<const PrefillSnapshot> prefill_pool;
  std::span<const DecodeSnapshot> decode_pool;
  SLOConfig slo;
  ConductorConfig conductor;
  PerfModelParams perf;
  double now_ms = 0.0;
};

// One global scheduling decision for a request. kKvcacheCentric runs the full
// cache-aware/cache-balancing branch logic with hot-spot migration; the other
// choices are the comparison strategies (random placement, shortest queue,
// local-prefix-aware argmin). `rng` is consulted only by kRandom.
SchedulingDecision schedule(const RequestRecord& request, const ScheduleContext& ctx,
                            SchedulerChoice choice, Rng* rng = nullptr);

}  // namespace kvcsim
