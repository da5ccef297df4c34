/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kvcsim/conductor.hpp"
#include "kvcsim/kvcache.hpp"
#include "kvcsim/overload.hpp"
#include "kvcsim/perf_model.hpp"
#include "kvcsim/trace.hpp"

namespace kvcsim {

struct ClusterConfig {
  int prefill_instances = 1;
  int decode_instances = 1;
  std::optional<std::size_t> cache_capacity_blocks;   // per prefill instance; unbounded if unset
  CachePolicy cache_policy = CachePolicy::kLru;
  std::optional<std::int64_t> decode_max_kv_tokens;   // per decoding instance VRAM bound

  void validate() const;
};

struct SimConfig {
  ClusterConfig cluster;
  SchedulerChoice scheduler = SchedulerChoice::kKvcacheCentric;
  AdmissionConfig admission;
  PerfModelParams perf;
  SLOConfig slo;
  ConductorConfig conductor;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class RequestOutcome { kCompleted, kRejectedAdmission, kRejectedDecode };

const char* to_string(RequestOutcome outcome);

// Why a non-completed request ended where it did, or which gate passed it.
enum class RejectDetail {
  kNone,
  kAdmissionPolicy,     // admission gate at arrival
  kSchedulerTtftSlo,    // conductor estimate exceeded l_ttft
  kSchedulerTbtSlo,     // conductor estimate exceeded l_tbt
  kBaselineDecodeGate,  // baseline policy's decode-entry load gate
  kDecodeDoubleCheck,   // local scheduler's TBT re-check after prefill
};

const char* to_string(RejectDetail detail);

struct RequestReport {
  std::int64_t request_id = 0;
  std::int64_t arrival_ms = 0;
  RequestOutcome outcome = RequestOutcome::kCompleted;
  RejectDetail reject_detail = RejectDetail::kNone;
  bool within_slo = false;
  double ttft_ms = 0.0;
  double max_tbt_ms = 0.0;
  std::size_t tbt_samples = 0;
  std::int64_t computed_prefill_tokens = 0;  // uncached tokens this request cost
  std::int64_t wasted_prefill_tokens = 0;    // nonzero when rejected after prefill
  std::int64_t output_tokens = 0;
  int prefill_id = -1;
  int decode_id = -1;
  std::size_t reused_prefix_blocks = 0;
};

// TTFT/TBT within their inclusive SLO bounds.
bool within_slo(double ttft_ms, double max_tbt_ms, const SLOConfig& slo);

struct SimReport {
  std::vector<RequestReport> requests;
  std::vector<double> ttft_ms;  // completed requests, completion order
  std::vector<double> tbt_ms;   // every inter-token gap
  std::vector<LoadSample> load_series;
  FluctuationStats fluctuation;

  std::int64_t arrived = 0;
  std::int64_t accepted = 0;
  std::int64_t completed = 0;
  std::int64_t goodput = 0;       // completed within both SLOs
  std::int64_t slo_violated = 0;  // completed outside an SLO
  std::int64_t rejected_admission = 0;        // admission policy + conductor SLO gates
  std::int64_t rejected_admission_policy = 0;
  std::int64_t rejected_scheduler = 0;
  std::int64_t rejected_decode = 0;           // baseline decode gate + double-check
  std::int64_t rejected_decode_gate = 0;
  std::int64_t rejected_double_check = 0;

  std::int64_t wasted_prefill_tokens = 0;     // prefill compute thrown away by decode rejection
  std::int64_t wasted_tokens_slo_violation = 0;

  double mean_ttft_ms = 0.0;
  double p90_ttft_ms = 0.0;
  double mean_tbt_ms = 0.0;
  double p90_tbt_ms = 0.0;
  double normalized_p90_ttft = 0.0;  // p90 / l_ttft
  double normalized_p90_tbt = 0.0;
  double slo_attainment = 0.0;       // goodput / arrived

  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::int64_t migrations_emitted = 0;
  std::int64_t migrations_completed = 0;
  std::int64_t migrations_aborted = 0;
  double derived_t_d_ms = 0.0;  // prediction decode duration actually used

  // Deterministic JSON rendering of everything above (requests optional).
  std::string to_json_string(bool include_requests = true) const;
};

// Engine event log for tests and debugging; off unless a sink is passed in.
struct EngineEvent {
  double time_ms = 0.0;
  std::string kind;
  std::int64_t request_id = -1;
  int instance_id = -1;
};

struct EngineTrace {
  std::vector<EngineEvent> events;
};

// Runs the whole trace through the cluster to drain and aggregates metrics.
// Deterministic: identical (trace, config, seed) gives identical reports.
SimReport run(const std::vector<RequestRecord>& trace, const SimConfig& config,
              EngineTrace* engine_trace = nullptr);

}  // namespace kvcsim
