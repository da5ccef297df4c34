/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "kvcsim/errors.hpp"

namespace kvcsim {

namespace {

struct TomlValue {
  enum class Kind { kInt, kFloat, kBool, kString };
  Kind kind = Kind::kInt;
  std::int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::string s;
  std::size_t line = 0;
};

using Section = std::map<std::string, TomlValue>;
using Table = std::map<std::string, Section>;

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

TomlValue parse_value(const std::string& raw, std::size_t line, const std::string& origin) {
  TomlValue v;
  v.line = line;
  if (raw.empty()) {
    throw ParseError(origin + ":" + std::to_string(line) + ": empty value");
  }
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw ParseError(origin + ":" + std::to_string(line) + ": unterminated string");
    }
    v.kind = TomlValue::Kind::kString;
    v.s = raw.substr(1, raw.size() - 2);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::kBool;
    v.b = raw == "true";
    return v;
  }
  if (raw == "inf") {
    v.kind = TomlValue::Kind::kFloat;
    v.f = std::numeric_limits<double>::infinity();
    return v;
  }
  // number: integer unless it carries a fraction/exponent
  const bool floaty = raw.find_first_of(".eE") != std::string::npos;
  try {
    std::size_t used = 0;
    if (floaty) {
      v.kind = TomlValue::Kind::kFloat;
      v.f = std::stod(raw, &used);
    } else {
      v.kind = TomlValue::Kind::kInt;
      v.i = std::stoll(raw, &used);
    }
    if (used != raw.size()) throw std::invalid_argument(raw);
  } catch (const std::exception&) {
    throw ParseError(origin + ":" + std::to_string(line) + ": bad value '" + raw + "'");
  }
  return v;
}

Table parse_table(const std::string& text, const std::string& origin) {
  Table table;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError(origin + ":" + std::to_string(lineno) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      table.try_emplace(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string raw = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    table[section][key] = parse_value(raw, lineno, origin);
  }
  return table;
}

class Reader {
 public:
  Reader(const Table& table, const std::string& origin) : table_(table), origin_(origin) {}

  bool has(const std::string& section, const std::string& key) const {
    auto s = table_.find(section);
    return s != table_.end() && s->second.count(key) > 0;
  }
  bool has_section(const std::string& section) const { return table_.count(section) > 0; }

  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const {
    const TomlValue* v = find(section, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kInt) fail(section, key, "an integer");
    return v->i;
  }
  double get_float(const std::string& section, const std::string& key, double fallback) const {
    const TomlValue* v = find(section, key);
    if (!v) return fallback;
    if (v->kind == TomlValue::Kind::kInt) return static_cast<double>(v->i);
    if (v->kind != TomlValue::Kind::kFloat) fail(section, key, "a number");
    return v->f;
  }
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const TomlValue* v = find(section, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kBool) fail(section, key, "a bool");
    return v->b;
  }
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const TomlValue* v = find(section, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kString) fail(section, key, "a string");
    return v->s;
  }
  // integer count or inf/"inf" meaning unbounded
  std::optional<std::int64_t> get_bound(const std::string& section,
                                        const std::string& key) const {
    const TomlValue* v = find(section, key);
    if (!v) return std::nullopt;
    if (v->kind == TomlValue::Kind::kInt) return v->i;
    if (v->kind == TomlValue::Kind::kFloat && std::isinf(v->f)) return std::nullopt;
    if (v->kind == TomlValue::Kind::kString && v->s == "inf") return std::nullopt;
    fail(section, key, "an integer or inf");
    return std::nullopt;
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& want) const {
    const TomlValue* v = find(section, key);
    throw ValidationError(origin_ + (v ? ":" + std::to_string(v->line) : "") + ": [" +
                          section + "] " + key + " must be " + want);
  }

 private:
  const TomlValue* find(const std::string& section, const std::string& key) const {
    auto s = table_.find(section);
    if (s == table_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  const Table& table_;
  std::string origin_;
};

template <typename Enum>
Enum parse_enum(const Reader& reader, const std::string& section, const std::string& key,
                Enum fallback, std::optional<Enum> (*from_string)(const std::string&)) {
  const std::string name = reader.get_string(section, key, "");
  if (name.empty()) return fallback;
  const auto parsed = from_string(name);
  if (!parsed) {
    throw ValidationError("[" + section + "] " + key + ": unknown value '" + name + "'");
  }
  return *parsed;
}

}  // namespace

void RunConfig::validate() const {
  if (trace_path.has_value() == workload.has_value()) {
    throw ValidationError(
        "config: exactly one trace source required ([trace] path or a [workload] section)");
  }
  if (!(speedup > 0)) throw ValidationError("config: [trace] speedup must be > 0");
  sim.validate();
}

PerfModelParams perf_preset(const std::string& name) {
  if (name == "dummy-70B") {
    PerfModelParams p;
    p.alpha_mlp = 0.1;
    p.beta_attn = 2.0e-6;
    p.gamma_decode = 20.0;
    p.delta_decode = 0.5;
    p.epsilon_decode = 0.2;
    p.kv_bytes_per_token = 327680.0;  // 80 layers x 8 KV heads x 128 dim x 2 x fp16
    p.link_bandwidth = 1.0e8;         // 100 GB/s RDMA fabric
    p.load_bandwidth = 3.0e7;         // 30 GB/s DRAM -> HBM
    p.prefill_chunk = 2048;
    p.cpp_group_size = 2;
    return p;
  }
  throw ValidationError("unknown perf preset '" + name + "' (available: dummy-70B)");
}

SLOConfig slo_preset(const std::string& name) {
  if (name == "paper-slo") {
    SLOConfig slo;
    slo.l_ttft_ms = 30000.0;
    slo.l_tbt_ms = 100.0;
    slo.ttft_multiplier = 10.0;
    slo.tbt_multiplier = 5.0;
    return slo;
  }
  throw ValidationError("unknown slo preset '" + name + "' (available: paper-slo)");
}

std::pair<int, int> cluster_preset(const std::string& name) {
  int p = 0, d = 0;
  char suffix = 0;
  if (std::sscanf(name.c_str(), "%dP+%d%c", &p, &d, &suffix) == 3 && suffix == 'D' && p > 0 &&
      d > 0) {
    return {p, d};
  }
  throw ValidationError("bad cluster preset '" + name + "' (expected like 3P+1D)");
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  const Table table = parse_table(text, origin);
  const Reader reader(table, origin);
  RunConfig config;

  if (reader.has("trace", "path")) {
    config.trace_path = reader.get_string("trace", "path", "");
  }
  config.speedup = reader.get_float("trace", "speedup", 1.0);

  if (reader.has_section("workload")) {
    WorkloadSpec spec;
    spec.arrival = ArrivalProcess::kPoisson;
    spec.rate_rps = reader.get_float("workload", "rate_rps", 1.0);
    spec.request_count = reader.get_int("workload", "request_count", 0);
    const std::int64_t in_fixed = reader.get_int("workload", "input_length", 0);
    if (in_fixed > 0) {
      spec.input_length = LengthSpec::fixed(in_fixed);
    } else {
      spec.input_length = {reader.get_int("workload", "input_length_min", 1),
                           reader.get_int("workload", "input_length_max", 1)};
    }
    const std::int64_t out_fixed = reader.get_int("workload", "output_length", 0);
    if (out_fixed > 0) {
      spec.output_length = LengthSpec::fixed(out_fixed);
    } else {
      spec.output_length = {reader.get_int("workload", "output_length_min", 1),
                            reader.get_int("workload", "output_length_max", 1)};
    }
    spec.cache_ratio = reader.get_float("workload", "cache_ratio", 0.0);
    spec.seed = static_cast<std::uint64_t>(reader.get_int("workload", "seed", 0));
    spec.block_size = reader.get_int("workload", "block_size", kTraceBlockSize);
    config.workload = spec;
  }

  auto& sim = config.sim;
  config.cluster_preset_name = reader.get_string("cluster", "preset", "");
  if (!config.cluster_preset_name.empty()) {
    const auto [p, d] = cluster_preset(config.cluster_preset_name);
    sim.cluster.prefill_instances = p;
    sim.cluster.decode_instances = d;
  }
  sim.cluster.prefill_instances = static_cast<int>(
      reader.get_int("cluster", "prefill_instances", sim.cluster.prefill_instances));
  sim.cluster.decode_instances = static_cast<int>(
      reader.get_int("cluster", "decode_instances", sim.cluster.decode_instances));
  if (const auto cap = reader.get_bound("cluster", "cache_capacity_blocks")) {
    sim.cluster.cache_capacity_blocks = static_cast<std::size_t>(*cap);
  }
  if (const auto kv = reader.get_bound("cluster", "decode_max_kv_tokens")) {
    sim.cluster.decode_max_kv_tokens = *kv;
  }
  sim.cluster.cache_policy = parse_enum(reader, "cluster", "cache_policy",
                                        CachePolicy::kLru, cache_policy_from_string);

  sim.scheduler = parse_enum(reader, "scheduler", "choice", SchedulerChoice::kKvcacheCentric,
                             scheduler_choice_from_string);
  sim.conductor.kvcache_balancing_threshold = reader.get_float(
      "scheduler", "kvcache_balancing_threshold", sim.conductor.kvcache_balancing_threshold);
  sim.conductor.block_size =
      reader.get_int("scheduler", "block_size", sim.conductor.block_size);

  sim.admission.policy = parse_enum(reader, "admission", "choice", AdmissionPolicy::kNone,
                                    admission_policy_from_string);
  sim.admission.load_threshold =
      reader.get_float("admission", "load_threshold", sim.admission.load_threshold);
  sim.admission.prediction.horizon_ms =
      reader.get_float("admission", "horizon_ms", sim.admission.prediction.horizon_ms);
  sim.admission.prediction.t_d_ms =
      reader.get_float("admission", "t_d_ms", sim.admission.prediction.t_d_ms);
  sim.admission.prediction.sample_period_ms = reader.get_float(
      "admission", "sample_period_ms", sim.admission.prediction.sample_period_ms);

  config.perf_preset_name = reader.get_string("perf", "preset", "");
  if (!config.perf_preset_name.empty()) sim.perf = perf_preset(config.perf_preset_name);
  sim.perf.alpha_mlp = reader.get_float("perf", "alpha_mlp", sim.perf.alpha_mlp);
  sim.perf.beta_attn = reader.get_float("perf", "beta_attn", sim.perf.beta_attn);
  sim.perf.gamma_decode = reader.get_float("perf", "gamma_decode", sim.perf.gamma_decode);
  sim.perf.delta_decode = reader.get_float("perf", "delta_decode", sim.perf.delta_decode);
  sim.perf.epsilon_decode =
      reader.get_float("perf", "epsilon_decode", sim.perf.epsilon_decode);
  sim.perf.kv_bytes_per_token =
      reader.get_float("perf", "kv_bytes_per_token", sim.perf.kv_bytes_per_token);
  sim.perf.link_bandwidth =
      reader.get_float("perf", "link_bandwidth", sim.perf.link_bandwidth);
  sim.perf.load_bandwidth =
      reader.get_float("perf", "load_bandwidth", sim.perf.load_bandwidth);
  sim.perf.prefill_chunk = reader.get_int("perf", "prefill_chunk", sim.perf.prefill_chunk);
  sim.perf.cpp_group_size = reader.get_int("perf", "cpp_group_size", sim.perf.cpp_group_size);

  config.slo_preset_name = reader.get_string("slo", "preset", "");
  if (!config.slo_preset_name.empty()) sim.slo = slo_preset(config.slo_preset_name);
  sim.slo.l_ttft_ms = reader.get_float("slo", "l_ttft_ms", sim.slo.l_ttft_ms);
  sim.slo.l_tbt_ms = reader.get_float("slo", "l_tbt_ms", sim.slo.l_tbt_ms);
  sim.slo.ttft_multiplier = reader.get_float("slo", "ttft_multiplier", sim.slo.ttft_multiplier);
  sim.slo.tbt_multiplier = reader.get_float("slo", "tbt_multiplier", sim.slo.tbt_multiplier);

  sim.seed = static_cast<std::uint64_t>(reader.get_int("run", "seed", 0));
  config.out_dir = reader.get_string("run", "out_dir", config.out_dir);
  config.per_request_csv = reader.get_bool("run", "per_request_csv", config.per_request_csv);

  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream out;
  out.precision(17);
  out << v;
  const std::string s = out.str();
  // keep floats recognizably floats on re-parse
  return s.find_first_of(".eE") == std::string::npos ? s + ".0" : s;
}

std::string fmt_bound_size(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "\"inf\"";
}

std::string fmt_bound_i64(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : "\"inf\"";
}

}  // namespace

std::string emit_run_config(const RunConfig& config) {
  std::ostringstream out;
  out << "[trace]\n";
  if (config.trace_path) out << "path = \"" << *config.trace_path << "\"\n";
  out << "speedup = " << fmt_double(config.speedup) << "\n\n";

  if (config.workload) {
    const auto& w = *config.workload;
    out << "[workload]\n";
    out << "rate_rps = " << fmt_double(w.rate_rps) << "\n";
    out << "request_count = " << w.request_count << "\n";
    if (w.input_length.is_fixed()) {
      out << "input_length = " << w.input_length.min_tokens << "\n";
    } else {
      out << "input_length_min = " << w.input_length.min_tokens << "\n";
      out << "input_length_max = " << w.input_length.max_tokens << "\n";
    }
    if (w.output_length.is_fixed()) {
      out << "output_length = " << w.output_length.min_tokens << "\n";
    } else {
      out << "output_length_min = " << w.output_length.min_tokens << "\n";
      out << "output_length_max = " << w.output_length.max_tokens << "\n";
    }
    out << "cache_ratio = " << fmt_double(w.cache_ratio) << "\n";
    out << "seed = " << w.seed << "\n";
    out << "block_size = " << w.block_size << "\n\n";
  }

  const auto& sim = config.sim;
  out << "[cluster]\n";
  out << "prefill_instances = " << sim.cluster.prefill_instances << "\n";
  out << "decode_instances = " << sim.cluster.decode_instances << "\n";
  out << "cache_capacity_blocks = " << fmt_bound_size(sim.cluster.cache_capacity_blocks) << "\n";
  out << "cache_policy = \"" << to_string(sim.cluster.cache_policy) << "\"\n";
  out << "decode_max_kv_tokens = " << fmt_bound_i64(sim.cluster.decode_max_kv_tokens) << "\n\n";

  out << "[scheduler]\n";
  out << "choice = \"" << to_string(sim.scheduler) << "\"\n";
  out << "kvcache_balancing_threshold = " << fmt_double(sim.conductor.kvcache_balancing_threshold)
      << "\n";
  out << "block_size = " << sim.conductor.block_size << "\n\n";

  out << "[admission]\n";
  out << "choice = \"" << to_string(sim.admission.policy) << "\"\n";
  out << "load_threshold = " << fmt_double(sim.admission.load_threshold) << "\n";
  out << "horizon_ms = " << fmt_double(sim.admission.prediction.horizon_ms) << "\n";
  out << "t_d_ms = " << fmt_double(sim.admission.prediction.t_d_ms) << "\n";
  out << "sample_period_ms = " << fmt_double(sim.admission.prediction.sample_period_ms)
      << "\n\n";

  out << "[perf]\n";
  out << "alpha_mlp = " << fmt_double(sim.perf.alpha_mlp) << "\n";
  out << "beta_attn = " << fmt_double(sim.perf.beta_attn) << "\n";
  out << "gamma_decode = " << fmt_double(sim.perf.gamma_decode) << "\n";
  out << "delta_decode = " << fmt_double(sim.perf.delta_decode) << "\n";
  out << "epsilon_decode = " << fmt_double(sim.perf.epsilon_decode) << "\n";
  out << "kv_bytes_per_token = " << fmt_double(sim.perf.kv_bytes_per_token) << "\n";
  out << "link_bandwidth = " << fmt_double(sim.perf.link_bandwidth) << "\n";
  out << "load_bandwidth = " << fmt_double(sim.perf.load_bandwidth) << "\n";
  out << "prefill_chunk = " << sim.perf.prefill_chunk << "\n";
  out << "cpp_group_size = " << sim.perf.cpp_group_size << "\n\n";

  out << "[slo]\n";
  out << "l_ttft_ms = " << fmt_double(sim.slo.l_ttft_ms) << "\n";
  out << "l_tbt_ms = " << fmt_double(sim.slo.l_tbt_ms) << "\n";
  out << "ttft_multiplier = " << fmt_double(sim.slo.ttft_multiplier) << "\n";
  out << "tbt_multiplier = " << fmt_double(sim.slo.tbt_multiplier) << "\n\n";

  out << "[run]\n";
  out << "seed = " << sim.seed << "\n";
  out << "out_dir = \"" << config.out_dir << "\"\n";
  out << "per_request_csv = " << (config.per_request_csv ? "true" : "false") << "\n";
  return out.str();
}

std::uint64_t trace_digest(const std::vector<RequestRecord>& records) {
  const std::string bytes = serialize_trace_string(records);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace kvcsim
