/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <span>

namespace kvcsim {

// Coefficients of the analytic prefill/decode/transfer cost models. These
// stand in for offline-profiled GPU timing; all durations are milliseconds.
struct PerfModelParams {
  double alpha_mlp = 0.1;          // ms per uncached token (linear term)
  double beta_attn = 2.0e-6;       // ms per uncached token x total context token
  double gamma_decode = 20.0;      // ms fixed per decode iteration
  double delta_decode = 0.5;       // ms per batched request per iteration
  double epsilon_decode = 0.2;     // ms per 1k resident KV tokens per iteration
  double kv_bytes_per_token = 327680.0;
  double link_bandwidth = 1.0e8;   // bytes/ms, instance-to-instance KVCache link
  double load_bandwidth = 3.0e7;   // bytes/ms, CPU cache pool -> GPU
  std::int64_t prefill_chunk = 2048;  // tokens per pipelined prefill chunk
  std::int64_t cpp_group_size = 1;    // pipeline stages per prefill instance group

  void validate() const;  // throws ValidationError on out-of-range coefficients
};

// Compute time to prefill `input_tokens` of which `cached_tokens` are reused:
// alpha * u + beta * u * L with u = L - p. Zero when fully cached.
double estimate_prefill_time(std::int64_t input_tokens, std::int64_t cached_tokens,
                             const PerfModelParams& params);

// Queueing time is the sum of the prefill estimates of everything ahead.
double estimate_queue_time(std::span<const double> queued_prefill_ms);
double estimate_queue_time(double busy_until_ms, double now_ms, double queued_work_ms);

// Link wait plus payload time for moving `transfer_tokens` worth of KVCache.
double estimate_transfer_time(std::int64_t transfer_tokens, const PerfModelParams& params,
                              double sender_busy_until_ms = 0.0, double now_ms = 0.0);

// One continuous-batching iteration: gamma + delta*B + epsilon*(K/1000).
double decode_iteration_time(std::int64_t batch_size, std::int64_t resident_kv_tokens,
                             const PerfModelParams& params);

// Layer-wise streaming overlaps cache loads with compute; storing the new
// KVCache is fully overlapped and adds nothing.
double layerwise_effective_prefill(double compute_ms, double cache_load_ms);

// Time to load `cached_tokens` of KVCache from the CPU pool into the GPU.
double cache_load_time(std::int64_t cached_tokens, const PerfModelParams& params);

// Chunked-pipeline-parallel prefill of `uncached_tokens` on a group of
// cpp_group_size stages, attention context accumulating from
// `cached_context_tokens`. Fill-drain bound: (sum t_i)/X + (X-1)*max(t_i)/X;
// X = 1 reduces to the serial chunk sum.
double cpp_prefill_latency(std::int64_t uncached_tokens, std::int64_t cached_context_tokens,
                           const PerfModelParams& params);
double cpp_prefill_latency(std::int64_t uncached_tokens, const PerfModelParams& params);

// Full prefill execution estimate for a request: CPP compute when the uncached
// span exceeds one chunk, plain prefill otherwise, overlapped with the prefix
// cache load.
double prefill_execution_ms(std::int64_t input_tokens, std::int64_t cached_tokens,
                            const PerfModelParams& params);

}  // namespace kvcsim
