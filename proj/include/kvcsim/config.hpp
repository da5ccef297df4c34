/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <optional>
#include <string>
#include <utility>

#include "kvcsim/sim_engine.hpp"
#include "kvcsim/trace.hpp"

namespace kvcsim {

// A full run description: one trace source (file replay or synthetic
// workload), the cluster, and every knob the engine takes.
struct RunConfig {
  std::optional<std::string> trace_path;
  double speedup = 1.0;
  std::optional<WorkloadSpec> workload;

  SimConfig sim;

  std::string out_dir = "out";
  bool per_request_csv = false;

  // preset names recorded for provenance; empty means inline values
  std::string perf_preset_name;
  std::string slo_preset_name;
  std::string cluster_preset_name;

  void validate() const;  // exactly one trace source, nested configs valid
};

// Shipped parameter presets.
PerfModelParams perf_preset(const std::string& name);       // "dummy-70B"
SLOConfig slo_preset(const std::string& name);              // "paper-slo"
std::pair<int, int> cluster_preset(const std::string& name);  // "3P+1D" etc.

// Config file format: flat key = value lines under [section] headers
// (a small TOML subset: ints, floats, bools, quoted strings, inf).
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);

// Emits every field with defaults materialized; parse(emit(c)) == c.
std::string emit_run_config(const RunConfig& config);

// FNV-1a over the serialized trace, logged so compared runs can prove they
// replayed identical bytes.
std::uint64_t trace_digest(const std::vector<RequestRecord>& records);

}  // namespace kvcsim
