/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/overload.hpp"

#include <algorithm>
#include <cmath>

#include "kvcsim/errors.hpp"

namespace kvcsim {

const char* to_string(AdmissionPolicy policy) {
  switch (policy) {
    case AdmissionPolicy::kNone: return "none";
    case AdmissionPolicy::kBaseline: return "baseline";
    case AdmissionPolicy::kEarly: return "early";
    case AdmissionPolicy::kPredictive: return "predictive";
  }
  return "?";
}

std::optional<AdmissionPolicy> admission_policy_from_string(const std::string& name) {
  if (name == "none") return AdmissionPolicy::kNone;
  if (name == "baseline") return AdmissionPolicy::kBaseline;
  if (name == "early") return AdmissionPolicy::kEarly;
  if (name == "predictive") return AdmissionPolicy::kPredictive;
  return std::nullopt;
}

void PredictionConfig::validate() const {
  if (t_d_ms < 0) throw ValidationError("prediction: t_d_ms must be >= 0 (0 derives it)");
  if (!(horizon_ms > 0)) throw ValidationError("prediction: horizon_ms must be > 0");
  if (!(sample_period_ms > 0)) throw ValidationError("prediction: sample_period_ms must be > 0");
}

void AdmissionConfig::validate() const {
  if (!(load_threshold > 0)) throw ValidationError("admission: load_threshold must be > 0");
  prediction.validate();
}

double measure_prefill_load(std::span<const PrefillSnapshot> pool, const SLOConfig& slo,
                            double now_ms) {
  double load = 0.0;
  for (const auto& p : pool) {
    const double outstanding_ms =
        estimate_queue_time(p.busy_until_ms, now_ms, p.queued_work_ms);
    load = std::max(load, outstanding_ms / slo.l_ttft_ms);
  }
  return load;
}

double measure_decode_load(std::span<const DecodeSnapshot> pool, const SLOConfig& slo,
                           const PerfModelParams& params) {
  double load = 0.0;
  for (const auto& d : pool) {
    if (d.batch_size == 0) continue;
    load = std::max(load,
                    decode_iteration_time(d.batch_size, d.resident_kv_tokens, params) /
                        slo.l_tbt_ms);
  }
  return load;
}

bool baseline_admits(double stage_load, double threshold) {
  return stage_load < threshold;
}

bool early_rejection_admits(double prefill_load, double decode_load, double threshold) {
  return std::max(prefill_load, decode_load) < threshold;
}

bool predictive_admits(double prefill_load, double predicted_decode_load, double threshold) {
  return std::max(prefill_load, predicted_decode_load) < threshold;
}

double predict_decode_load(const DecodeLoadSnapshot& snapshot, double now_ms,
                           const PredictionConfig& config, const SLOConfig& slo,
                           const PerfModelParams& params) {
  config.validate();
  if (snapshot.instances.empty()) return 0.0;
  const double t = now_ms + config.horizon_ms;

  struct FutureBatch {
    std::int64_t size = 0;
    std::int64_t kv_tokens = 0;
  };
  std::vector<FutureBatch> future(snapshot.instances.size());

  for (std::size_t i = 0; i < snapshot.instances.size(); ++i) {
    for (const auto& r : snapshot.instances[i].residents) {
      // Departs if its decode time will have exceeded t_d by t.
      if ((now_ms - r.decode_started_ms) + config.horizon_ms >= config.t_d_ms) continue;
      future[i].size += 1;
      future[i].kv_tokens += r.kv_tokens;
    }
  }

  std::size_t next = 0;
  for (const auto& r : snapshot.pipeline) {
    if (r.predicted_completion_ms > t) continue;
    future[next].size += 1;
    future[next].kv_tokens += r.kv_tokens;
    next = (next + 1) % future.size();
  }

  double total_ratio = 0.0;
  for (const auto& batch : future) {
    if (batch.size == 0) continue;
    total_ratio += decode_iteration_time(batch.size, batch.kv_tokens, params) / slo.l_tbt_ms;
  }
  return total_ratio / static_cast<double>(future.size());
}

FluctuationStats fluctuation_stats(std::span<const LoadSample> series) {
  if (series.size() < 2) {
    throw ValidationError("fluctuation_stats needs at least 2 samples");
  }
  FluctuationStats stats;
  const double n = static_cast<double>(series.size());

  double mean_p = 0.0, mean_d = 0.0;
  double min_p = series.front().prefill_load, max_p = min_p;
  double min_d = series.front().decode_load, max_d = min_d;
  for (const auto& s : series) {
    mean_p += s.prefill_load;
    mean_d += s.decode_load;
    min_p = std::min(min_p, s.prefill_load);
    max_p = std::max(max_p, s.prefill_load);
    min_d = std::min(min_d, s.decode_load);
    max_d = std::max(max_d, s.decode_load);
  }
  mean_p /= n;
  mean_d /= n;
  stats.amplitude_prefill = max_p - min_p;
  stats.amplitude_decode = max_d - min_d;

  double cov = 0.0, var_p = 0.0, var_d = 0.0;
  for (const auto& s : series) {
    const double dp = s.prefill_load - mean_p;
    const double dd = s.decode_load - mean_d;
    cov += dp * dd;
    var_p += dp * dp;
    var_d += dd * dd;
  }
  if (var_p == 0.0 || var_d == 0.0) {
    stats.degenerate = true;
    stats.pearson_r = 0.0;
  } else {
    stats.pearson_r = cov / std::sqrt(var_p * var_d);
  }
  return stats;
}

}  // namespace kvcsim
