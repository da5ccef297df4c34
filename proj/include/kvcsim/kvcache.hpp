/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kvcsim {

struct RequestRecord;

// Prefix-chained block id: equal ids imply identical block tokens and all
// preceding tokens, so a block's chain depth is intrinsic to its id.
using BlockId = std::int64_t;

// Deterministic chaining hash: key of a block from the previous block's key
// and the block's own content hash. Collisions are treated as impossible at
// model scale.
BlockId chain_hash(BlockId prev_key, std::uint64_t content_hash);

enum class CachePolicy { kLru, kLfu, kLengthAware };

const char* to_string(CachePolicy policy);
std::optional<CachePolicy> cache_policy_from_string(const std::string& name);

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  double hit_ratio() const {
    const std::uint64_t total = hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }
};

// Capacity-bounded paged block pool with pluggable eviction. Single-owner
// mutable object; the engine serializes all access.
class CachePool {
 public:
  // capacity == nullopt means unbounded (no evictions ever).
  CachePool(std::optional<std::size_t> capacity_blocks, CachePolicy policy);

  struct AdmitResult {
    std::vector<BlockId> evicted;
    std::size_t hits = 0;
    std::size_t misses = 0;
    bool truncated = false;  // request longer than capacity; only the prefix was admitted
  };

  // References every block of a prefix-chained request in order: resident
  // blocks are touched (hit), absent ones inserted (miss), evicting by policy.
  // Blocks of the request being admitted are never eviction victims. When the
  // request exceeds capacity, only the first `capacity` blocks are inserted;
  // the tail still counts as misses. Blocks with index in [skip_begin,
  // skip_end) are reserved for an incoming transfer: neither referenced nor
  // inserted here (insert_replicated lands them later).
  AdmitResult admit_and_touch(std::span<const BlockId> blocks);
  AdmitResult admit_and_touch(std::span<const BlockId> blocks, std::size_t skip_begin,
                              std::size_t skip_end);

  // Inserts chain blocks starting at depth `chain_offset` without touching
  // hit/miss accounting (hot-spot replication path). Returns evicted blocks.
  std::vector<BlockId> insert_replicated(std::span<const BlockId> blocks,
                                         std::size_t chain_offset = 0);

  // Longest k such that blocks[0..k) are all resident.
  std::size_t match_prefix(std::span<const BlockId> blocks) const;

  bool contains(BlockId id) const { return resident_.find(id) != resident_.end(); }
  std::size_t size() const { return resident_.size(); }
  std::optional<std::size_t> capacity() const { return capacity_; }
  CachePolicy policy() const { return policy_; }
  const CacheStats& stats() const { return stats_; }

 private:
  struct Meta {
    std::uint64_t last_use = 0;
    std::uint64_t use_count = 0;
    std::uint32_t position = 0;  // chain depth at first insertion
  };
  // Eviction priority tuple; the set's first non-protected entry is the victim.
  using Rank = std::pair<std::array<std::int64_t, 3>, BlockId>;

  Rank rank_of(BlockId id, const Meta& meta) const;
  void touch(BlockId id, Meta& meta);
  void insert_block(BlockId id, std::uint32_t position,
                    const std::unordered_map<BlockId, std::uint32_t>* protected_ids,
                    std::vector<BlockId>* evicted);

  std::optional<std::size_t> capacity_;
  CachePolicy policy_;
  std::unordered_map<BlockId, Meta> resident_;
  std::set<Rank> victim_order_;
  std::uint64_t clock_ = 0;  // logical reference clock, monotone
  CacheStats stats_;
};

// Largest k such that request_blocks[0..k) are all present in the index.
std::size_t match_prefix(const CachePool& index, std::span<const BlockId> request_blocks);

struct PolicySweepPoint {
  std::optional<std::size_t> capacity;  // nullopt = unbounded
  double hit_ratio = 0.0;
};

// One pass per capacity over a single global pool, replaying the whole trace.
std::vector<PolicySweepPoint> policy_sweep(const std::vector<RequestRecord>& trace,
                                           CachePolicy policy,
                                           std::span<const std::optional<std::size_t>> capacities);

struct PopularityPoint {
  std::uint64_t hit_count = 0;          // references beyond first insertion
  double cumulative_fraction = 0.0;     // fraction of distinct blocks with count <= hit_count
};

// CDF of per-block hit counts across the trace (unbounded single pool).
std::vector<PopularityPoint> popularity_cdf(const std::vector<RequestRecord>& trace);

}  // namespace kvcsim
