/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Brute-force reference implementations used as test oracles. Everything here
 * recomputes results from first principles with plain data structures and
 * linear scans, independent of the library's implementation choices.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "kvcsim/kvcache.hpp"
#include "kvcsim/rand.hpp"
#include "kvcsim/trace.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Cache simulation: one global pool, linear scans everywhere.

struct CacheEntry {
  kvcsim::BlockId id = 0;
  std::uint64_t last_use = 0;
  std::uint64_t use_count = 0;
  std::uint32_t position = 0;
};

struct CacheCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  double ratio() const {
    const std::uint64_t total = hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }
};

inline CacheCounters cache_sim(const std::vector<kvcsim::RequestRecord>& trace,
                               kvcsim::CachePolicy policy,
                               std::optional<std::size_t> capacity) {
  std::vector<CacheEntry> entries;
  CacheCounters counters;
  std::uint64_t clock = 0;

  const auto find = [&](kvcsim::BlockId id) -> CacheEntry* {
    for (auto& e : entries) {
      if (e.id == id) return &e;
    }
    return nullptr;
  };
  // Victim: LRU oldest use; LFU least count then oldest; LengthAware deepest
  // position, then least count, then oldest.
  const auto worse = [&](const CacheEntry& a, const CacheEntry& b) {
    switch (policy) {
      case kvcsim::CachePolicy::kLru:
        return a.last_use < b.last_use;
      case kvcsim::CachePolicy::kLfu:
        if (a.use_count != b.use_count) return a.use_count < b.use_count;
        return a.last_use < b.last_use;
      case kvcsim::CachePolicy::kLengthAware:
        if (a.position != b.position) return a.position > b.position;
        if (a.use_count != b.use_count) return a.use_count < b.use_count;
        return a.last_use < b.last_use;
    }
    return false;
  };

  for (const auto& rec : trace) {
    for (std::size_t i = 0; i < rec.hash_ids.size(); ++i) {
      const kvcsim::BlockId id = rec.hash_ids[i];
      ++clock;
      if (CacheEntry* e = find(id)) {
        ++counters.hits;
        e->last_use = clock;
        ++e->use_count;
        continue;
      }
      ++counters.misses;
      if (capacity && i >= *capacity) continue;  // tail past capacity never admitted
      if (capacity) {
        while (entries.size() >= *capacity) {
          std::size_t victim = entries.size();
          for (std::size_t k = 0; k < entries.size(); ++k) {
            const bool protected_block =
                std::find(rec.hash_ids.begin(), rec.hash_ids.end(), entries[k].id) !=
                rec.hash_ids.end();
            if (protected_block) continue;
            if (victim == entries.size() || worse(entries[k], entries[victim])) victim = k;
          }
          if (victim == entries.size()) break;
          entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(victim));
        }
        if (entries.size() >= *capacity) continue;
      }
      entries.push_back({id, clock, 1, static_cast<std::uint32_t>(i)});
    }
  }
  return counters;
}

// hit_count -> number of distinct blocks, by direct counting
inline std::map<std::uint64_t, std::size_t> popularity_hist(
    const std::vector<kvcsim::RequestRecord>& trace) {
  std::map<kvcsim::BlockId, std::uint64_t> refs;
  for (const auto& rec : trace) {
    for (kvcsim::BlockId id : rec.hash_ids) ++refs[id];
  }
  std::map<std::uint64_t, std::size_t> hist;
  for (const auto& [id, n] : refs) ++hist[n - 1];
  return hist;
}

// ---------------------------------------------------------------------------
// Pipeline: simulate an X-stage flowshop where chunk i spends t_i/X per stage.

inline double flowshop_latency(const std::vector<double>& chunk_ms, std::int64_t stages) {
  if (chunk_ms.empty()) return 0.0;
  std::vector<double> stage_free(static_cast<std::size_t>(stages), 0.0);
  double finish = 0.0;
  for (double t : chunk_ms) {
    const double per_stage = t / static_cast<double>(stages);
    double ready = 0.0;  // when this chunk leaves the previous stage
    for (auto& free_at : stage_free) {
      const double start = std::max(ready, free_at);
      ready = start + per_stage;
      free_at = ready;
    }
    finish = ready;
  }
  return finish;
}

// ---------------------------------------------------------------------------
// Exhaustive re-evaluation of the scheduling decision, with its own cost math.

struct Prefill {
  int id = 0;
  std::set<kvcsim::BlockId> cache;
  double busy_until = 0.0;
  double sender_busy_until = 0.0;
  double queued_work = 0.0;
};

struct Decode {
  int id = 0;
  std::int64_t batch = 0;
  std::int64_t kv = 0;
};

struct Costs {
  double alpha = 0.0, beta = 0.0;
  double gamma = 0.0, delta = 0.0, epsilon = 0.0;
  double kv_bytes = 0.0, link_bw = 1.0, load_bw = 1.0;
  std::int64_t chunk = 1, stages = 1;
  std::int64_t block_size = 1;
  double threshold = 4.0;
  double l_ttft = 0.0, l_tbt = 0.0;
};

inline std::size_t prefix_len(const std::set<kvcsim::BlockId>& cache,
                              const std::vector<kvcsim::BlockId>& chain) {
  std::size_t k = 0;
  while (k < chain.size() && cache.count(chain[k]) > 0) ++k;
  return k;
}

inline double exec_time(std::int64_t input, std::int64_t cached_tokens, const Costs& c) {
  const std::int64_t u = input - cached_tokens;
  double compute;
  if (u > c.chunk) {
    std::vector<double> chunks;
    std::int64_t done = 0;
    while (done < u) {
      const std::int64_t len = std::min(c.chunk, u - done);
      done += len;
      chunks.push_back(c.alpha * static_cast<double>(len) +
                       c.beta * static_cast<double>(len) *
                           static_cast<double>(cached_tokens + done));
    }
    compute = flowshop_latency(chunks, c.stages);
  } else {
    compute = c.alpha * static_cast<double>(u) +
              c.beta * static_cast<double>(u) * static_cast<double>(input);
  }
  const double load = static_cast<double>(cached_tokens) * c.kv_bytes / c.load_bw;
  return std::max(compute, load);
}

struct Decision {
  bool accepted = false;
  int prefill_id = -1;
  int decode_id = -1;
  double ttft = std::numeric_limits<double>::infinity();
  double tbt = 0.0;
  bool migrate = false;
  int migrate_source = -1;
};

inline Decision schedule_bruteforce(const std::vector<kvcsim::BlockId>& chain,
                                    std::int64_t input,
                                    const std::vector<Prefill>& prefills,
                                    const std::vector<Decode>& decodes, const Costs& c,
                                    double now) {
  std::size_t best_len = 0;
  int best_id = prefills.front().id;
  const Prefill* best_holder = &prefills.front();
  for (const auto& p : prefills) {
    const std::size_t len = prefix_len(p.cache, chain);
    if (len > best_len || (len == best_len && p.id < best_id)) {
      best_len = len;
      best_id = p.id;
      best_holder = &p;
    }
  }

  Decision d;
  std::size_t chosen_local = 0;
  for (const auto& p : prefills) {
    const std::size_t local = prefix_len(p.cache, chain);
    const double queue = std::max(0.0, p.busy_until - now) + p.queued_work;
    const double ratio = best_len == 0 ? 0.0
                         : local == 0 ? std::numeric_limits<double>::infinity()
                                      : static_cast<double>(best_len) /
                                            static_cast<double>(local);
    double candidate;
    if (ratio <= c.threshold) {
      const std::int64_t cached =
          std::min(static_cast<std::int64_t>(local) * c.block_size, input);
      candidate = queue + exec_time(input, cached, c);
    } else {
      const double transfer =
          std::max(0.0, best_holder->sender_busy_until - now) +
          static_cast<double>(static_cast<std::int64_t>(best_len - local) * c.block_size) *
              c.kv_bytes / c.link_bw;
      const std::int64_t cached =
          std::min(static_cast<std::int64_t>(best_len) * c.block_size, input);
      candidate = transfer + queue + exec_time(input, cached, c);
    }
    if (candidate < d.ttft || (candidate == d.ttft && p.id < d.prefill_id)) {
      d.ttft = candidate;
      d.prefill_id = p.id;
      chosen_local = local;
    }
  }

  double best_tbt = std::numeric_limits<double>::infinity();
  for (const auto& dec : decodes) {
    const double tbt = c.gamma + c.delta * static_cast<double>(dec.batch + 1) +
                       c.epsilon * static_cast<double>(dec.kv + input) / 1000.0;
    if (tbt < best_tbt || (tbt == best_tbt && dec.id < d.decode_id)) {
      best_tbt = tbt;
      d.decode_id = dec.id;
    }
  }
  d.tbt = best_tbt;

  if (d.ttft > c.l_ttft || d.tbt > c.l_tbt) {
    d.accepted = false;
    return d;
  }
  d.accepted = true;
  const double chosen_ratio = best_len == 0 ? 0.0
                              : chosen_local == 0
                                  ? std::numeric_limits<double>::infinity()
                                  : static_cast<double>(best_len) /
                                        static_cast<double>(chosen_local);
  if (chosen_ratio > c.threshold) {
    d.migrate = true;
    d.migrate_source = best_id;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Randomized prefix-chain traces: a forest of session chains, each request
// reusing a random depth of its session's chain (valid chaining by
// construction, with enough variety to stress eviction).

inline std::vector<kvcsim::RequestRecord> random_chain_trace(kvcsim::Rng& rng,
                                                             std::int64_t requests,
                                                             std::int64_t sessions,
                                                             std::int64_t max_depth,
                                                             std::int64_t block_size = 8) {
  std::vector<std::vector<kvcsim::BlockId>> chains(static_cast<std::size_t>(sessions));
  kvcsim::BlockId next_id = 0;
  std::vector<kvcsim::RequestRecord> trace;
  std::int64_t clock = 0;
  for (std::int64_t i = 0; i < requests; ++i) {
    auto& chain = chains[rng.index(chains.size())];
    const auto depth = rng.uniform_int(1, max_depth);
    while (static_cast<std::int64_t>(chain.size()) < depth) chain.push_back(next_id++);
    kvcsim::RequestRecord rec;
    rec.request_id = i;
    clock += rng.uniform_int(0, 50);
    rec.timestamp_ms = clock;
    rec.input_length = depth * block_size;
    rec.output_length = rng.uniform_int(1, 16);
    rec.hash_ids.assign(chain.begin(), chain.begin() + depth);
    trace.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace oracle
