/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/kvcache.hpp"

#include <algorithm>
#include <map>

#include "kvcsim/errors.hpp"
#include "kvcsim/trace.hpp"

namespace kvcsim {

BlockId chain_hash(BlockId prev_key, std::uint64_t content_hash) {
  std::uint64_t x = static_cast<std::uint64_t>(prev_key) + 0x9E3779B97F4A7C15ull;
  x ^= content_hash + 0x9E3779B97F4A7C15ull + (x << 6) + (x >> 2);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return static_cast<BlockId>(x & 0x7FFFFFFFFFFFFFFFull);
}

const char* to_string(CachePolicy policy) {
  switch (policy) {
    case CachePolicy::kLru: return "lru";
    case CachePolicy::kLfu: return "lfu";
    case CachePolicy::kLengthAware: return "length_aware";
  }
  return "?";
}

std::optional<CachePolicy> cache_policy_from_string(const std::string& name) {
  if (name == "lru") return CachePolicy::kLru;
  if (name == "lfu") return CachePolicy::kLfu;
  if (name == "length_aware") return CachePolicy::kLengthAware;
  return std::nullopt;
}

CachePool::CachePool(std::optional<std::size_t> capacity_blocks, CachePolicy policy)
    : capacity_(capacity_blocks), policy_(policy) {
  if (capacity_ && *capacity_ == 0) {
    throw ValidationError("cache capacity must be >= 1 block (or unbounded)");
  }
}

CachePool::Rank CachePool::rank_of(BlockId id, const Meta& meta) const {
  switch (policy_) {
    case CachePolicy::kLru:
      return {{static_cast<std::int64_t>(meta.last_use), 0, 0}, id};
    case CachePolicy::kLfu:
      // Least frequently used first; ties broken by least-recent use.
      return {{static_cast<std::int64_t>(meta.use_count),
               static_cast<std::int64_t>(meta.last_use), 0}, id};
    case CachePolicy::kLengthAware:
      // Deepest chain position first, then lower use count, then older use.
      return {{-static_cast<std::int64_t>(meta.position),
               static_cast<std::int64_t>(meta.use_count),
               static_cast<std::int64_t>(meta.last_use)}, id};
  }
  return {{0, 0, 0}, id};
}

void CachePool::touch(BlockId id, Meta& meta) {
  victim_order_.erase(rank_of(id, meta));
  meta.last_use = ++clock_;
  meta.use_count += 1;
  victim_order_.insert(rank_of(id, meta));
}

void CachePool::insert_block(BlockId id, std::uint32_t position,
                             const std::unordered_map<BlockId, std::uint32_t>* protected_ids,
                             std::vector<BlockId>* evicted) {
  if (capacity_) {
    while (resident_.size() >= *capacity_) {
      auto victim = victim_order_.end();
      for (auto it = victim_order_.begin(); it != victim_order_.end(); ++it) {
        if (!protected_ids || protected_ids->find(it->second) == protected_ids->end()) {
          victim = it;
          break;
        }
      }
      if (victim == victim_order_.end()) break;  // everything resident is protected
      evicted->push_back(victim->second);
      resident_.erase(victim->second);
      victim_order_.erase(victim);
    }
    if (resident_.size() >= *capacity_) return;  // could not make room
  }
  Meta meta;
  meta.last_use = ++clock_;
  meta.use_count = 1;
  meta.position = position;
  victim_order_.insert(rank_of(id, meta));
  resident_.emplace(id, meta);
}

CachePool::AdmitResult CachePool::admit_and_touch(std::span<const BlockId> blocks) {
  return admit_and_touch(blocks, 0, 0);
}

CachePool::AdmitResult CachePool::admit_and_touch(std::span<const BlockId> blocks,
                                                  std::size_t skip_begin,
                                                  std::size_t skip_end) {
  AdmitResult result;
  std::unordered_map<BlockId, std::uint32_t> request_ids;
  request_ids.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    request_ids.emplace(blocks[i], static_cast<std::uint32_t>(i));
  }

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i >= skip_begin && i < skip_end) continue;  // lands via transfer instead
    auto it = resident_.find(blocks[i]);
    if (it != resident_.end()) {
      ++result.hits;
      ++stats_.hits;
      touch(blocks[i], it->second);
      continue;
    }
    ++result.misses;
    ++stats_.misses;
    if (capacity_ && i >= *capacity_) {
      result.truncated = true;  // uncacheable tail; only the prefix fits
      continue;
    }
    insert_block(blocks[i], static_cast<std::uint32_t>(i), &request_ids, &result.evicted);
  }
  return result;
}

std::vector<BlockId> CachePool::insert_replicated(std::span<const BlockId> blocks,
                                                  std::size_t chain_offset) {
  std::vector<BlockId> evicted;
  std::unordered_map<BlockId, std::uint32_t> chain_ids;
  chain_ids.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    chain_ids.emplace(blocks[i], static_cast<std::uint32_t>(chain_offset + i));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::size_t position = chain_offset + i;
    if (resident_.find(blocks[i]) != resident_.end()) continue;
    if (capacity_ && position >= *capacity_) break;
    insert_block(blocks[i], static_cast<std::uint32_t>(position), &chain_ids, &evicted);
  }
  return evicted;
}

std::size_t CachePool::match_prefix(std::span<const BlockId> blocks) const {
  std::size_t k = 0;
  while (k < blocks.size() && contains(blocks[k])) ++k;
  return k;
}

std::size_t match_prefix(const CachePool& index, std::span<const BlockId> request_blocks) {
  return index.match_prefix(request_blocks);
}

std::vector<PolicySweepPoint> policy_sweep(const std::vector<RequestRecord>& trace,
                                           CachePolicy policy,
                                           std::span<const std::optional<std::size_t>> capacities) {
  if (capacities.empty()) {
    throw ValidationError("policy_sweep needs at least one capacity");
  }
  std::vector<PolicySweepPoint> points;
  points.reserve(capacities.size());
  for (const auto& capacity : capacities) {
    CachePool pool(capacity, policy);
    for (const auto& rec : trace) {
      pool.admit_and_touch(rec.hash_ids);
    }
    points.push_back({capacity, pool.stats().hit_ratio()});
  }
  return points;
}

std::vector<PopularityPoint> popularity_cdf(const std::vector<RequestRecord>& trace) {
  std::unordered_map<BlockId, std::uint64_t> references;
  for (const auto& rec : trace) {
    for (BlockId id : rec.hash_ids) ++references[id];
  }
  if (references.empty()) return {};

  std::map<std::uint64_t, std::size_t> histogram;  // hit_count -> distinct blocks
  for (const auto& [id, refs] : references) {
    ++histogram[refs - 1];
  }
  std::vector<PopularityPoint> cdf;
  cdf.reserve(histogram.size());
  const double total = static_cast<double>(references.size());
  std::size_t running = 0;
  for (const auto& [hit_count, blocks] : histogram) {
    running += blocks;
    cdf.push_back({hit_count, static_cast<double>(running) / total});
  }
  return cdf;
}

}  // namespace kvcsim
