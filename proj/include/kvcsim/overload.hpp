/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvcsim/conductor.hpp"
#include "kvcsim/perf_model.hpp"

namespace kvcsim {

// One point of the load time series, sampled on a fixed cadence.
struct LoadSample {
  double time_ms = 0.0;
  double prefill_load = 0.0;  // predicted max TTFT across prefill instances / l_ttft
  double decode_load = 0.0;   // predicted max TBT across decoding instances / l_tbt
};

enum class AdmissionPolicy { kNone, kBaseline, kEarly, kPredictive };

const char* to_string(AdmissionPolicy policy);
std::optional<AdmissionPolicy> admission_policy_from_string(const std::string& name);

struct PredictionConfig {
  double t_d_ms = 0.0;          // uniform assumed decode duration; 0 = derive per run
  double horizon_ms = 5000.0;   // lookahead
  double sample_period_ms = 1000.0;

  void validate() const;
};

struct AdmissionConfig {
  AdmissionPolicy policy = AdmissionPolicy::kNone;
  double load_threshold = 1.0;  // reject at load >= threshold
  PredictionConfig prediction;

  void validate() const;
};

// SLO-headroom load of a prefill pool: max over instances of total outstanding
// prefill work (in-flight remainder plus queued estimates) over l_ttft.
double measure_prefill_load(std::span<const PrefillSnapshot> pool, const SLOConfig& slo,
                            double now_ms);

// Load of a decoding pool: max over instances of the current iteration time
// over l_tbt; an empty batch contributes zero.
double measure_decode_load(std::span<const DecodeSnapshot> pool, const SLOConfig& slo,
                           const PerfModelParams& params);

// Per-stage gate: reject when that stage's pool load has no SLO headroom left.
bool baseline_admits(double stage_load, double threshold);

// Arrival-time gate on the greater of the two pool loads.
bool early_rejection_admits(double prefill_load, double decode_load, double threshold);

bool predictive_admits(double prefill_load, double predicted_decode_load, double threshold);

// Snapshot needed to simulate the decoding pools `horizon` into the future.
struct DecodeLoadSnapshot {
  struct Resident {
    double decode_started_ms = 0.0;
    std::int64_t kv_tokens = 0;
  };
  struct Instance {
    std::vector<Resident> residents;
  };
  struct PipelineRequest {
    double predicted_completion_ms = 0.0;  // when prefill (and stream) finishes
    std::int64_t kv_tokens = 0;
  };

  std::vector<Instance> instances;
  std::vector<PipelineRequest> pipeline;  // pre-sorted by (completion, arrival order)
};

// System-level prediction: at t = now + horizon, residents whose decode time
// will have exceeded t_d are gone, requests finishing prefill by t have joined
// round-robin, and the result is the mean iteration-time/l_tbt ratio.
double predict_decode_load(const DecodeLoadSnapshot& snapshot, double now_ms,
                           const PredictionConfig& config, const SLOConfig& slo,
                           const PerfModelParams& params);

struct FluctuationStats {
  double pearson_r = 0.0;
  double amplitude_prefill = 0.0;  // max - min of the prefill series
  double amplitude_decode = 0.0;
  bool degenerate = false;  // a constant series made the correlation undefined
};

FluctuationStats fluctuation_stats(std::span<const LoadSample> series);

}  // namespace kvcsim
