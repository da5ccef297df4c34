/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/conductor.hpp"

#include <algorithm>
#include <limits>

#include "kvcsim/errors.hpp"
#include "kvcsim/rand.hpp"
#include "kvcsim/trace.hpp"

namespace kvcsim {

void SLOConfig::validate() const {
  if (!(l_ttft_ms > 0) || !(l_tbt_ms > 0) || !(ttft_multiplier > 0) || !(tbt_multiplier > 0)) {
    throw ValidationError("slo: all bounds and multipliers must be > 0");
  }
}

void ConductorConfig::validate() const {
  if (!(kvcache_balancing_threshold > 1.0)) {
    throw ValidationError("conductor: kvcache_balancing_threshold must be > 1");
  }
  if (block_size < 1) {
    throw ValidationError("conductor: block_size must be >= 1");
  }
}

const char* to_string(SchedulerChoice choice) {
  switch (choice) {
    case SchedulerChoice::kRandom: return "random";
    case SchedulerChoice::kLoadBalance: return "load_balance";
    case SchedulerChoice::kCacheAware: return "cache_aware";
    case SchedulerChoice::kKvcacheCentric: return "kvcache_centric";
  }
  return "?";
}

std::optional<SchedulerChoice> scheduler_choice_from_string(const std::string& name) {
  if (name == "random") return SchedulerChoice::kRandom;
  if (name == "load_balance") return SchedulerChoice::kLoadBalance;
  if (name == "cache_aware") return SchedulerChoice::kCacheAware;
  if (name == "kvcache_centric") return SchedulerChoice::kKvcacheCentric;
  return std::nullopt;
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kNone: return "none";
    case RejectReason::kTtftSlo: return "TTFT_SLO";
    case RejectReason::kTbtSlo: return "TBT_SLO";
  }
  return "?";
}

BestPrefixMatch find_best_prefix_match(std::span<const PrefillSnapshot> pool,
                                       std::span<const BlockId> block_keys) {
  if (pool.empty()) {
    throw ValidationError("find_best_prefix_match: empty prefill pool");
  }
  BestPrefixMatch best{0, pool.front().id};
  bool first = true;
  for (const auto& instance : pool) {
    const std::size_t len = instance.cache->match_prefix(block_keys);
    if (first || len > best.prefix_blocks ||
        (len == best.prefix_blocks && instance.id < best.instance_id)) {
      best = {len, instance.id};
      first = false;
    }
  }
  return best;
}

DecodeSelection select_decoding_instance(std::span<const DecodeSnapshot> pool,
                                         std::int64_t request_kv_tokens,
                                         const PerfModelParams& params) {
  if (pool.empty()) {
    throw ValidationError("select_decoding_instance: empty decoding pool");
  }
  DecodeSelection best{pool.front().id, std::numeric_limits<double>::infinity()};
  bool first = true;
  for (const auto& instance : pool) {
    const double tbt = decode_iteration_time(instance.batch_size + 1,
                                             instance.resident_kv_tokens + request_kv_tokens,
                                             params);
    if (first || tbt < best.predicted_tbt_ms ||
        (tbt == best.predicted_tbt_ms && instance.id < best.instance_id)) {
      best = {instance.id, tbt};
      first = false;
    }
  }
  return best;
}

namespace {

// Cached tokens from a matched block prefix; the last block may be partial.
std::int64_t prefix_tokens(std::size_t prefix_blocks, std::int64_t block_size,
                           std::int64_t input_tokens) {
  return std::min(static_cast<std::int64_t>(prefix_blocks) * block_size, input_tokens);
}

struct Candidate {
  int id = -1;
  double ttft_ms = std::numeric_limits<double>::infinity();
  std::size_t local_prefix = 0;
  std::size_t used_prefix = 0;
  double queue_ms = 0.0;
  double transfer_ms = 0.0;
  double exec_ms = 0.0;
  bool remote = false;
};

// best_prefix_len / prefix_len with the 0-denominator convention: an empty
// local prefix makes the remote branch unconditionally attractive whenever a
// match exists anywhere; no match anywhere means the plain cache-aware branch.
double balance_ratio(std::size_t best_len, std::size_t prefix_len) {
  if (best_len == 0) return 0.0;
  if (prefix_len == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(best_len) / static_cast<double>(prefix_len);
}

}  // namespace

SchedulingDecision schedule(const RequestRecord& request, const ScheduleContext& ctx,
                            SchedulerChoice choice, Rng* rng) {
  if (ctx.prefill_pool.empty()) {
    throw ValidationError("schedule: empty prefill pool");
  }
  if (ctx.decode_pool.empty()) {
    throw ValidationError("schedule: empty decoding pool");
  }

  const std::int64_t block_size = ctx.conductor.block_size;
  const std::int64_t input = request.input_length;
  const std::span<const BlockId> keys(request.hash_ids);

  const auto queue_time = [&](const PrefillSnapshot& p) {
    return estimate_queue_time(p.busy_until_ms, ctx.now_ms, p.queued_work_ms);
  };
  const auto local_candidate = [&](const PrefillSnapshot& p) {
    Candidate c;
    c.id = p.id;
    c.local_prefix = p.cache->match_prefix(keys);
    c.used_prefix = c.local_prefix;
    c.queue_ms = queue_time(p);
    c.exec_ms = prefill_execution_ms(input, prefix_tokens(c.local_prefix, block_size, input),
                                     ctx.perf);
    c.ttft_ms = c.queue_ms + c.exec_ms;
    return c;
  };

  Candidate chosen;
  BestPrefixMatch best{0, 0};

  switch (choice) {
    case SchedulerChoice::kRandom: {
      if (rng == nullptr) {
        throw ValidationError("schedule: random scheduling needs an RNG");
      }
      chosen = local_candidate(ctx.prefill_pool[rng->index(ctx.prefill_pool.size())]);
      break;
    }
    case SchedulerChoice::kLoadBalance: {
      const PrefillSnapshot* lightest = nullptr;
      double lightest_queue = 0.0;
      for (const auto& p : ctx.prefill_pool) {
        const double q = queue_time(p);
        if (lightest == nullptr || q < lightest_queue ||
            (q == lightest_queue && p.id < lightest->id)) {
          lightest = &p;
          lightest_queue = q;
        }
      }
      chosen = local_candidate(*lightest);
      break;
    }
    case SchedulerChoice::kCacheAware: {
      for (const auto& p : ctx.prefill_pool) {
        const Candidate c = local_candidate(p);
        if (chosen.id < 0 || c.ttft_ms < chosen.ttft_ms ||
            (c.ttft_ms == chosen.ttft_ms && c.id < chosen.id)) {
          chosen = c;
        }
      }
      break;
    }
    case SchedulerChoice::kKvcacheCentric: {
      best = find_best_prefix_match(ctx.prefill_pool, keys);
      const PrefillSnapshot* best_instance = nullptr;
      for (const auto& p : ctx.prefill_pool) {
        if (p.id == best.instance_id) best_instance = &p;
      }
      for (const auto& p : ctx.prefill_pool) {
        Candidate c;
        c.id = p.id;
        c.local_prefix = p.cache->match_prefix(keys);
        c.queue_ms = queue_time(p);
        const double ratio = balance_ratio(best.prefix_blocks, c.local_prefix);
        if (ratio <= ctx.conductor.kvcache_balancing_threshold) {
          // Cache-aware prefill scheduling (equality stays local).
          c.used_prefix = c.local_prefix;
          c.exec_ms = prefill_execution_ms(
              input, prefix_tokens(c.local_prefix, block_size, input), ctx.perf);
          c.ttft_ms = c.queue_ms + c.exec_ms;
        } else {
          // Cache-aware and -balancing prefill scheduling.
          c.remote = true;
          c.used_prefix = best.prefix_blocks;
          const auto transfer_blocks =
              static_cast<std::int64_t>(best.prefix_blocks - c.local_prefix);
          c.transfer_ms = estimate_transfer_time(transfer_blocks * block_size, ctx.perf,
                                                 best_instance->sender_busy_until_ms,
                                                 ctx.now_ms);
          c.exec_ms = prefill_execution_ms(
              input, prefix_tokens(best.prefix_blocks, block_size, input), ctx.perf);
          c.ttft_ms = c.transfer_ms + c.queue_ms + c.exec_ms;
        }
        if (chosen.id < 0 || c.ttft_ms < chosen.ttft_ms ||
            (c.ttft_ms == chosen.ttft_ms && c.id < chosen.id)) {
          chosen = c;
        }
      }
      break;
    }
  }

  SchedulingDecision decision;
  decision.prefill_id = chosen.id;
  decision.local_prefix_blocks = chosen.local_prefix;
  decision.used_prefix_blocks = chosen.used_prefix;
  decision.queue_ms = chosen.queue_ms;
  decision.transfer_ms = chosen.transfer_ms;
  decision.exec_ms = chosen.exec_ms;
  decision.estimated_ttft_ms = chosen.ttft_ms;

  const DecodeSelection d = select_decoding_instance(ctx.decode_pool, input, ctx.perf);
  decision.decode_id = d.instance_id;
  decision.estimated_tbt_ms = d.predicted_tbt_ms;

  if (decision.estimated_ttft_ms > ctx.slo.l_ttft_ms) {
    decision.accepted = false;
    decision.reject_reason = RejectReason::kTtftSlo;
    return decision;
  }
  if (decision.estimated_tbt_ms > ctx.slo.l_tbt_ms) {
    decision.accepted = false;
    decision.reject_reason = RejectReason::kTbtSlo;
    return decision;
  }
  decision.accepted = true;

  // KVCache hot-spot migration: replicate the best-matched prefix onto the
  // chosen instance whenever the balance ratio strictly exceeds the threshold.
  if (choice == SchedulerChoice::kKvcacheCentric &&
      balance_ratio(best.prefix_blocks, chosen.local_prefix) >
          ctx.conductor.kvcache_balancing_threshold) {
    decision.migration = MigrationPlan{best.instance_id, best.prefix_blocks};
  }
  return decision;
}

}  // namespace kvcsim
