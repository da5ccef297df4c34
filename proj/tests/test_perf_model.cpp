/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/perf_model.hpp"

#include <vector>

#include "doctest.h"
#include "kvcsim/errors.hpp"
#include "kvcsim/rand.hpp"
#include "oracles.hpp"

using namespace kvcsim;

namespace {

PerfModelParams simple_params() {
  PerfModelParams p;
  p.alpha_mlp = 0.01;
  p.beta_attn = 1e-6;
  p.gamma_decode = 5.0;
  p.delta_decode = 1.0;
  p.epsilon_decode = 0.0;
  p.kv_bytes_per_token = 100000.0;  // 100 KB/token
  p.link_bandwidth = 1e7;           // 10 GB/s
  p.load_bandwidth = 1e7;
  p.prefill_chunk = 1 << 20;
  p.cpp_group_size = 1;
  return p;
}

PerfModelParams random_params(Rng& rng) {
  PerfModelParams p;
  p.alpha_mlp = rng.uniform01() * 0.5;
  p.beta_attn = rng.uniform01() * 1e-5;
  p.gamma_decode = rng.uniform01() * 50.0;
  p.delta_decode = rng.uniform01() * 5.0;
  p.epsilon_decode = rng.uniform01() * 2.0;
  p.kv_bytes_per_token = 1000.0 + rng.uniform01() * 5e5;
  p.link_bandwidth = 1e5 + rng.uniform01() * 1e8;
  p.load_bandwidth = 1e5 + rng.uniform01() * 1e8;
  p.prefill_chunk = rng.uniform_int(1, 4096);
  p.cpp_group_size = rng.uniform_int(1, 8);
  return p;
}

}  // namespace

TEST_CASE("estimate_prefill_time") {
  const auto p = simple_params();

  SUBCASE("full cache hit costs nothing") {
    CHECK(estimate_prefill_time(8192, 8192, p) == 0.0);
  }
  SUBCASE("direct evaluation") {
    // 0.01 * 8192 + 1e-6 * 8192^2
    CHECK(estimate_prefill_time(8192, 0, p) ==
          doctest::Approx(0.01 * 8192 + 1e-6 * 8192.0 * 8192.0));
    CHECK(estimate_prefill_time(8192, 0, p) == doctest::Approx(149.0).epsilon(0.001));
  }
  SUBCASE("superlinear whenever beta > 0") {
    for (const std::int64_t len : {100, 1000, 10000}) {
      CHECK(estimate_prefill_time(2 * len, 0, p) > 2.0 * estimate_prefill_time(len, 0, p));
    }
  }
  SUBCASE("cached prefix beyond input is rejected") {
    CHECK_THROWS_AS(estimate_prefill_time(10, 11, p), ValidationError);
  }
}

TEST_CASE("estimate_transfer_time") {
  const auto p = simple_params();

  SUBCASE("zero payload on an idle sender") {
    CHECK(estimate_transfer_time(0, p) == 0.0);
  }
  SUBCASE("arithmetic: 6144 tokens at 100 KB/token over 10 GB/s") {
    CHECK(estimate_transfer_time(6144, p) == doctest::Approx(61.44));
  }
  SUBCASE("a busy sender adds exactly its remaining time") {
    const double idle = estimate_transfer_time(6144, p, 0.0, 0.0);
    const double busy = estimate_transfer_time(6144, p, 150.0, 100.0);
    CHECK(busy - idle == doctest::Approx(50.0));
  }
  SUBCASE("negative payload is rejected") {
    CHECK_THROWS_AS(estimate_transfer_time(-1, p), ValidationError);
  }
}

TEST_CASE("estimate_queue_time") {
  SUBCASE("empty queue") {
    CHECK(estimate_queue_time(std::span<const double>{}) == 0.0);
  }
  SUBCASE("sums queued prefill times") {
    const std::vector<double> queue{10.0, 20.0, 30.0};
    CHECK(estimate_queue_time(queue) == 60.0);
    CHECK(estimate_queue_time(std::span(queue).subspan(1)) == 50.0);
  }
  SUBCASE("includes the in-flight remainder") {
    CHECK(estimate_queue_time(120.0, 100.0, 60.0) == 80.0);
    CHECK(estimate_queue_time(50.0, 100.0, 60.0) == 60.0);  // already free
  }
}

TEST_CASE("decode_iteration_time") {
  PerfModelParams p = simple_params();

  SUBCASE("direct evaluation") {
    CHECK(decode_iteration_time(1, 0, p) == doctest::Approx(6.0));  // 5 + 1*1
  }
  SUBCASE("sublinear per-request scaling with gamma > 0") {
    const double t1 = decode_iteration_time(1, 0, p);
    const double t2 = decode_iteration_time(2, 0, p);
    CHECK(t2 < 2.0 * t1);
    CHECK(t2 / 2.0 < t1);
  }
  SUBCASE("constant when delta and epsilon vanish") {
    p.delta_decode = 0.0;
    p.epsilon_decode = 0.0;
    CHECK(decode_iteration_time(1, 1000, p) == decode_iteration_time(64, 64000, p));
  }
  SUBCASE("empty batch is rejected") {
    CHECK_THROWS_AS(decode_iteration_time(0, 0, p), ValidationError);
  }
}

TEST_CASE("layerwise_effective_prefill") {
  CHECK(layerwise_effective_prefill(123.0, 0.0) == 123.0);
  CHECK(layerwise_effective_prefill(100.0, 140.0) == 140.0);
  CHECK(layerwise_effective_prefill(140.0, 100.0) == 140.0);
  CHECK_THROWS_AS(layerwise_effective_prefill(-1.0, 0.0), ValidationError);
}

TEST_CASE("cpp_prefill_latency") {
  PerfModelParams p = simple_params();

  SUBCASE("X = 1 equals the serial chunk sum") {
    p.prefill_chunk = 1000;
    p.cpp_group_size = 1;
    // chunks of 1000/1000/1000/72 with running context
    double expected = 0.0;
    std::int64_t done = 0;
    const std::int64_t total = 3072 + 72;
    while (done < total) {
      const std::int64_t len = std::min<std::int64_t>(1000, total - done);
      done += len;
      expected += p.alpha_mlp * static_cast<double>(len) +
                  p.beta_attn * static_cast<double>(len) * static_cast<double>(done);
    }
    CHECK(cpp_prefill_latency(total, p) == doctest::Approx(expected));
  }

  SUBCASE("a single chunk cannot pipeline below one sweep") {
    p.prefill_chunk = 4096;
    for (const std::int64_t x : {1, 2, 4, 8}) {
      p.cpp_group_size = x;
      CHECK(cpp_prefill_latency(512, p) == doctest::Approx(cpp_prefill_latency(512, simple_params())));
    }
  }

  SUBCASE("equal chunks: X=2 turns 4x10ms into 25ms") {
    p.alpha_mlp = 0.01;
    p.beta_attn = 0.0;
    p.prefill_chunk = 1000;  // each chunk costs 10 ms
    p.cpp_group_size = 2;
    CHECK(cpp_prefill_latency(4000, p) == doctest::Approx(25.0));
    p.cpp_group_size = 1;
    CHECK(cpp_prefill_latency(4000, p) == doctest::Approx(40.0));
  }

  SUBCASE("matches an explicit flowshop simulation") {
    Rng rng(71);
    for (int round = 0; round < 200; ++round) {
      const auto params = random_params(rng);
      const std::int64_t uncached = rng.uniform_int(1, 20000);
      const std::int64_t cached = rng.uniform_int(0, 8192);

      std::vector<double> chunks;
      std::int64_t done = 0;
      while (done < uncached) {
        const std::int64_t len = std::min(params.prefill_chunk, uncached - done);
        done += len;
        chunks.push_back(params.alpha_mlp * static_cast<double>(len) +
                         params.beta_attn * static_cast<double>(len) *
                             static_cast<double>(cached + done));
      }
      const double expected = oracle::flowshop_latency(chunks, params.cpp_group_size);
      CHECK(cpp_prefill_latency(uncached, cached, params) ==
            doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("prefill_execution_ms composes chunking and cache loading") {
  PerfModelParams p = simple_params();
  p.prefill_chunk = 1000;
  p.cpp_group_size = 2;

  SUBCASE("short uncached spans skip the pipeline") {
    CHECK(prefill_execution_ms(800, 0, p) == doctest::Approx(estimate_prefill_time(800, 0, p)));
  }
  SUBCASE("long spans use the pipeline") {
    CHECK(prefill_execution_ms(8000, 0, p) == doctest::Approx(cpp_prefill_latency(8000, p)));
  }
  SUBCASE("a large cached prefix makes the load the bottleneck") {
    // full hit: compute 0, load = p * kv_bytes / load_bw
    const double load = 8000.0 * p.kv_bytes_per_token / p.load_bandwidth;
    CHECK(prefill_execution_ms(8000, 8000, p) == doctest::Approx(load));
  }
}

TEST_CASE("perf model fuzz: positivity, monotonicity, reductions") {
  Rng rng(81);
  for (int round = 0; round < 10000; ++round) {
    const auto p = random_params(rng);
    const std::int64_t input = rng.uniform_int(1, 50000);
    const std::int64_t cached = rng.uniform_int(0, input);

    const double t = estimate_prefill_time(input, cached, p);
    CHECK(t >= 0.0);
    // non-increasing in the cached prefix
    if (cached > 0) {
      CHECK(estimate_prefill_time(input, cached - 1, p) >= t);
    }

    const std::int64_t len = rng.uniform_int(0, 100000);
    const double tr = estimate_transfer_time(len, p);
    CHECK(tr >= 0.0);
    CHECK(estimate_transfer_time(len + 1, p) >= tr);

    const double iter =
        decode_iteration_time(rng.uniform_int(1, 512), rng.uniform_int(0, 1 << 20), p);
    CHECK(iter >= 0.0);

    // pipelining never loses to serial
    PerfModelParams serial = p;
    serial.cpp_group_size = 1;
    const std::int64_t uncached = input - cached;
    if (uncached > 0) {
      const double piped = cpp_prefill_latency(uncached, cached, p);
      const double flat = cpp_prefill_latency(uncached, cached, serial);
      CHECK(piped >= 0.0);
      CHECK(piped <= flat * (1.0 + 1e-12));
    }

    CHECK(layerwise_effective_prefill(t, 0.0) == t);
  }
}
