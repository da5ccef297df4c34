/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/perf_model.hpp"

#include <algorithm>
#include <string>

#include "kvcsim/errors.hpp"

namespace kvcsim {

void PerfModelParams::validate() const {
  const auto bad = [](const std::string& field) {
    throw ValidationError("perf model: " + field);
  };
  if (alpha_mlp < 0) bad("alpha_mlp must be >= 0");
  if (beta_attn < 0) bad("beta_attn must be >= 0");
  if (gamma_decode < 0) bad("gamma_decode must be >= 0");
  if (delta_decode < 0) bad("delta_decode must be >= 0");
  if (epsilon_decode < 0) bad("epsilon_decode must be >= 0");
  if (kv_bytes_per_token < 0) bad("kv_bytes_per_token must be >= 0");
  if (!(link_bandwidth > 0)) bad("link_bandwidth must be > 0");
  if (!(load_bandwidth > 0)) bad("load_bandwidth must be > 0");
  if (prefill_chunk < 1) bad("prefill_chunk must be >= 1");
  if (cpp_group_size < 1) bad("cpp_group_size must be >= 1");
}

double estimate_prefill_time(std::int64_t input_tokens, std::int64_t cached_tokens,
                             const PerfModelParams& params) {
  if (input_tokens < 0 || cached_tokens < 0 || cached_tokens > input_tokens) {
    throw ValidationError("estimate_prefill_time: need 0 <= cached <= input, got cached=" +
                          std::to_string(cached_tokens) + " input=" +
                          std::to_string(input_tokens));
  }
  const double uncached = static_cast<double>(input_tokens - cached_tokens);
  return params.alpha_mlp * uncached +
         params.beta_attn * uncached * static_cast<double>(input_tokens);
}

double estimate_queue_time(std::span<const double> queued_prefill_ms) {
  double total = 0.0;
  for (double t : queued_prefill_ms) total += t;
  return total;
}

double estimate_queue_time(double busy_until_ms, double now_ms, double queued_work_ms) {
  return std::max(0.0, busy_until_ms - now_ms) + queued_work_ms;
}

double estimate_transfer_time(std::int64_t transfer_tokens, const PerfModelParams& params,
                              double sender_busy_until_ms, double now_ms) {
  if (transfer_tokens < 0) {
    throw ValidationError("estimate_transfer_time: transfer_tokens must be >= 0");
  }
  const double payload_ms =
      static_cast<double>(transfer_tokens) * params.kv_bytes_per_token / params.link_bandwidth;
  return std::max(0.0, sender_busy_until_ms - now_ms) + payload_ms;
}

double decode_iteration_time(std::int64_t batch_size, std::int64_t resident_kv_tokens,
                             const PerfModelParams& params) {
  if (batch_size < 1) {
    throw ValidationError("decode_iteration_time: batch_size must be >= 1");
  }
  if (resident_kv_tokens < 0) {
    throw ValidationError("decode_iteration_time: resident_kv_tokens must be >= 0");
  }
  return params.gamma_decode + params.delta_decode * static_cast<double>(batch_size) +
         params.epsilon_decode * static_cast<double>(resident_kv_tokens) / 1000.0;
}

double layerwise_effective_prefill(double compute_ms, double cache_load_ms) {
  if (compute_ms < 0 || cache_load_ms < 0) {
    throw ValidationError("layerwise_effective_prefill: durations must be >= 0");
  }
  return std::max(compute_ms, cache_load_ms);
}

double cache_load_time(std::int64_t cached_tokens, const PerfModelParams& params) {
  if (cached_tokens < 0) {
    throw ValidationError("cache_load_time: cached_tokens must be >= 0");
  }
  return static_cast<double>(cached_tokens) * params.kv_bytes_per_token / params.load_bandwidth;
}

double cpp_prefill_latency(std::int64_t uncached_tokens, std::int64_t cached_context_tokens,
                           const PerfModelParams& params) {
  if (uncached_tokens < 0 || cached_context_tokens < 0) {
    throw ValidationError("cpp_prefill_latency: token counts must be >= 0");
  }
  if (uncached_tokens == 0) return 0.0;

  double sum_ms = 0.0;
  double max_ms = 0.0;
  std::int64_t done = 0;
  while (done < uncached_tokens) {
    const std::int64_t chunk = std::min(params.prefill_chunk, uncached_tokens - done);
    done += chunk;
    // Attention inside a chunk attends to everything processed so far.
    const std::int64_t context_end = cached_context_tokens + done;
    const double chunk_ms = params.alpha_mlp * static_cast<double>(chunk) +
                            params.beta_attn * static_cast<double>(chunk) *
                                static_cast<double>(context_end);
    sum_ms += chunk_ms;
    max_ms = std::max(max_ms, chunk_ms);
  }
  const double stages = static_cast<double>(params.cpp_group_size);
  return sum_ms / stages + (stages - 1.0) * max_ms / stages;
}

double cpp_prefill_latency(std::int64_t uncached_tokens, const PerfModelParams& params) {
  return cpp_prefill_latency(uncached_tokens, 0, params);
}

double prefill_execution_ms(std::int64_t input_tokens, std::int64_t cached_tokens,
                            const PerfModelParams& params) {
  if (input_tokens < 0 || cached_tokens < 0 || cached_tokens > input_tokens) {
    throw ValidationError("prefill_execution_ms: need 0 <= cached <= input");
  }
  const std::int64_t uncached = input_tokens - cached_tokens;
  const double compute_ms = uncached > params.prefill_chunk
                                ? cpp_prefill_latency(uncached, cached_tokens, params)
                                : estimate_prefill_time(input_tokens, cached_tokens, params);
  return layerwise_effective_prefill(compute_ms, cache_load_time(cached_tokens, params));
}

}  // namespace kvcsim
