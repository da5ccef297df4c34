/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kvcsim/config.hpp"
#include "kvcsim/errors.hpp"
#include "kvcsim/kvcache.hpp"
#include "kvcsim/metrics.hpp"
#include "kvcsim/sim_engine.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::string default_out_dir() {
  const char* env = std::getenv("KVCSIM_OUT_DIR");
  return env ? env : "out";
}

void warn_to_stderr(const std::string& message) {
  std::cerr << "kvcsim: " << message << "\n";
}

std::vector<kvcsim::RequestRecord> resolve_trace(const kvcsim::RunConfig& config) {
  std::vector<kvcsim::RequestRecord> records;
  if (config.trace_path) {
    if (!fs::exists(*config.trace_path)) {
      throw kvcsim::ParseError("trace file does not exist: " + *config.trace_path);
    }
    records = kvcsim::load_trace_file(*config.trace_path, warn_to_stderr);
  } else {
    records = kvcsim::generate_workload(*config.workload);
  }
  if (config.speedup != 1.0) {
    records = kvcsim::rescale_replay(std::move(records), config.speedup);
  }
  return records;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string cdf_csv(std::span<const double> values) {
  std::ostringstream out;
  out << "value_ms,cumulative_fraction\n";
  for (const auto& point : kvcsim::empirical_cdf(values)) {
    out << point.value << "," << point.cumulative_fraction << "\n";
  }
  return out.str();
}

std::string loads_csv(const std::vector<kvcsim::LoadSample>& series) {
  std::ostringstream out;
  out << "time_ms,prefill_load,decode_load\n";
  for (const auto& s : series) {
    out << s.time_ms << "," << s.prefill_load << "," << s.decode_load << "\n";
  }
  return out.str();
}

std::string per_request_csv(const kvcsim::SimReport& report) {
  std::ostringstream out;
  out << "request_id,arrival_ms,outcome,reject_detail,within_slo,ttft_ms,max_tbt_ms,"
         "tbt_samples,computed_prefill_tokens,wasted_prefill_tokens,output_tokens,"
         "prefill_id,decode_id,reused_prefix_blocks\n";
  for (const auto& r : report.requests) {
    out << r.request_id << "," << r.arrival_ms << "," << to_string(r.outcome) << ","
        << to_string(r.reject_detail) << "," << (r.within_slo ? 1 : 0) << "," << r.ttft_ms
        << "," << r.max_tbt_ms << "," << r.tbt_samples << "," << r.computed_prefill_tokens
        << "," << r.wasted_prefill_tokens << "," << r.output_tokens << "," << r.prefill_id
        << "," << r.decode_id << "," << r.reused_prefix_blocks << "\n";
  }
  return out.str();
}

std::string digest_hex(std::uint64_t digest) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << digest;
  return out.str();
}

struct ReplayOptions {
  std::string config_path;
  std::string trace_path;
  double speedup = 0.0;  // 0 = keep config value
  std::int64_t seed = -1;
  std::string out_dir;
  std::string scheduler;
  std::string admission;
  bool per_request = false;
};

kvcsim::RunConfig build_run_config(const ReplayOptions& opt) {
  kvcsim::RunConfig config;
  if (!opt.config_path.empty()) {
    config = kvcsim::load_run_config(opt.config_path);
  } else {
    config.sim.perf = kvcsim::perf_preset("dummy-70B");
    config.sim.slo = kvcsim::slo_preset("paper-slo");
    config.perf_preset_name = "dummy-70B";
    config.slo_preset_name = "paper-slo";
  }
  if (!opt.trace_path.empty()) {
    config.trace_path = opt.trace_path;
    config.workload.reset();
  }
  if (opt.speedup > 0.0) config.speedup = opt.speedup;
  if (opt.seed >= 0) config.sim.seed = static_cast<std::uint64_t>(opt.seed);
  if (!opt.out_dir.empty()) config.out_dir = opt.out_dir;
  if (!opt.scheduler.empty()) {
    const auto choice = kvcsim::scheduler_choice_from_string(opt.scheduler);
    if (!choice) throw kvcsim::ValidationError("unknown scheduler '" + opt.scheduler + "'");
    config.sim.scheduler = *choice;
  }
  if (!opt.admission.empty()) {
    const auto policy = kvcsim::admission_policy_from_string(opt.admission);
    if (!policy) {
      throw kvcsim::ValidationError("unknown admission policy '" + opt.admission + "'");
    }
    config.sim.admission.policy = *policy;
  }
  if (opt.per_request) config.per_request_csv = true;
  config.validate();
  return config;
}

int cmd_replay(const ReplayOptions& opt) {
  const kvcsim::RunConfig config = build_run_config(opt);
  const auto trace = resolve_trace(config);
  const std::uint64_t digest = kvcsim::trace_digest(trace);
  const kvcsim::SimReport report = kvcsim::run(trace, config.sim);

  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);

  nlohmann::json wrapped;
  wrapped["trace_digest"] = digest_hex(digest);
  wrapped["config_toml"] = kvcsim::emit_run_config(config);
  wrapped["report"] = nlohmann::json::parse(report.to_json_string(false));
  write_file(out_dir / "report.json", wrapped.dump(2) + "\n");
  write_file(out_dir / "ttft_cdf.csv", cdf_csv(report.ttft_ms));
  write_file(out_dir / "tbt_cdf.csv", cdf_csv(report.tbt_ms));
  write_file(out_dir / "loads.csv", loads_csv(report.load_series));
  write_file(out_dir / "config_used.toml", kvcsim::emit_run_config(config));
  if (config.per_request_csv) {
    write_file(out_dir / "per_request.csv", per_request_csv(report));
  }

  std::cout << "replayed " << report.arrived << " requests (digest " << digest_hex(digest)
            << ")\n"
            << "  completed " << report.completed << ", goodput " << report.goodput
            << ", rejected " << (report.rejected_admission + report.rejected_decode) << "\n"
            << "  mean TTFT " << report.mean_ttft_ms << " ms, P90 TTFT " << report.p90_ttft_ms
            << " ms (normalized " << report.normalized_p90_ttft << ")\n"
            << "  P90 TBT " << report.p90_tbt_ms << " ms (normalized "
            << report.normalized_p90_tbt << ")\n"
            << "  reports in " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_generate(const std::string& config_path, double rate, std::int64_t count,
                 std::int64_t input_len, std::int64_t output_len, double cache_ratio,
                 std::int64_t seed, const std::string& out_path) {
  kvcsim::WorkloadSpec spec;
  if (!config_path.empty()) {
    const auto config = kvcsim::load_run_config(config_path);
    if (!config.workload) {
      throw kvcsim::ValidationError("generate: config has no [workload] section");
    }
    spec = *config.workload;
  }
  if (rate > 0) spec.rate_rps = rate;
  if (count > 0) spec.request_count = count;
  if (input_len > 0) spec.input_length = kvcsim::LengthSpec::fixed(input_len);
  if (output_len > 0) spec.output_length = kvcsim::LengthSpec::fixed(output_len);
  if (cache_ratio >= 0) spec.cache_ratio = cache_ratio;
  if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);

  const auto records = kvcsim::generate_workload(spec);
  if (out_path.empty() || out_path == "-") {
    kvcsim::serialize_trace(records, std::cout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    kvcsim::serialize_trace(records, out);
    std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_analyze_cache(const std::string& trace_path, std::vector<std::string> policy_names,
                      std::vector<std::string> capacity_names, const std::string& out_dir_arg) {
  if (!fs::exists(trace_path)) {
    throw kvcsim::ParseError("trace file does not exist: " + trace_path);
  }
  const auto trace = kvcsim::load_trace_file(trace_path, warn_to_stderr);

  if (policy_names.empty()) policy_names = {"lru", "lfu", "length_aware"};
  if (capacity_names.empty()) {
    capacity_names = {"inf", "100000", "50000", "30000", "10000", "1000"};
  }
  std::vector<kvcsim::CachePolicy> policies;
  for (const auto& name : policy_names) {
    const auto policy = kvcsim::cache_policy_from_string(name);
    if (!policy) throw kvcsim::ValidationError("unknown cache policy '" + name + "'");
    policies.push_back(*policy);
  }
  std::vector<std::optional<std::size_t>> capacities;
  for (const auto& name : capacity_names) {
    if (name == "inf") {
      capacities.push_back(std::nullopt);
    } else {
      try {
        capacities.push_back(static_cast<std::size_t>(std::stoull(name)));
      } catch (const std::exception&) {
        throw kvcsim::ValidationError("bad capacity '" + name + "' (integer or inf)");
      }
    }
  }

  std::ostringstream grid;
  grid << "policy";
  for (const auto& name : capacity_names) grid << "," << name;
  grid << "\n";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto points = kvcsim::policy_sweep(trace, policies[i], capacities);
    grid << policy_names[i];
    for (const auto& point : points) grid << "," << point.hit_ratio;
    grid << "\n";
  }

  std::ostringstream popularity;
  popularity << "hit_count,cumulative_fraction_of_blocks\n";
  for (const auto& point : kvcsim::popularity_cdf(trace)) {
    popularity << point.hit_count << "," << point.cumulative_fraction << "\n";
  }

  if (out_dir_arg.empty()) {
    std::cout << grid.str() << "\n" << popularity.str();
  } else {
    const fs::path out_dir(out_dir_arg);
    fs::create_directories(out_dir);
    write_file(out_dir / "cache_grid.csv", grid.str());
    write_file(out_dir / "popularity_cdf.csv", popularity.str());
    std::cout << grid.str();
    std::cout << "reports in " << out_dir.string() << "\n";
  }
  return kExitOk;
}

int cmd_compare(const ReplayOptions& opt, const std::string& axis) {
  if (axis != "scheduler" && axis != "admission") {
    throw kvcsim::ValidationError("unknown compare axis '" + axis +
                                  "' (scheduler or admission)");
  }
  const kvcsim::RunConfig base = build_run_config(opt);
  const auto trace = resolve_trace(base);
  const std::string digest = digest_hex(kvcsim::trace_digest(trace));

  struct Variant {
    std::string name;
    kvcsim::SimConfig sim;
  };
  std::vector<Variant> variants;
  if (axis == "scheduler") {
    for (const auto choice :
         {kvcsim::SchedulerChoice::kRandom, kvcsim::SchedulerChoice::kLoadBalance,
          kvcsim::SchedulerChoice::kCacheAware, kvcsim::SchedulerChoice::kKvcacheCentric}) {
      Variant v{to_string(choice), base.sim};
      v.sim.scheduler = choice;
      variants.push_back(std::move(v));
    }
  } else {
    for (const auto policy :
         {kvcsim::AdmissionPolicy::kBaseline, kvcsim::AdmissionPolicy::kEarly,
          kvcsim::AdmissionPolicy::kPredictive}) {
      Variant v{to_string(policy), base.sim};
      v.sim.admission.policy = policy;
      variants.push_back(std::move(v));
    }
  }

  std::ostringstream csv;
  csv << "variant,trace_digest,arrived,accepted,completed,goodput,slo_attainment,"
         "mean_ttft_ms,p90_ttft_ms,p90_tbt_ms,rejected_admission,rejected_decode,"
         "rejected_total,wasted_prefill_tokens,pearson_r,amplitude_prefill,amplitude_decode\n";
  std::cout << std::left << std::setw(18) << "variant" << std::right << std::setw(10)
            << "goodput" << std::setw(14) << "mean_ttft" << std::setw(13) << "p90_ttft"
            << std::setw(11) << "rejected" << std::setw(14) << "wasted_tok" << std::setw(10)
            << "r" << "\n";
  for (const auto& v : variants) {
    const kvcsim::SimReport report = kvcsim::run(trace, v.sim);
    const std::int64_t rejected = report.rejected_admission + report.rejected_decode;
    csv << v.name << "," << digest << "," << report.arrived << "," << report.accepted << ","
        << report.completed << "," << report.goodput << "," << report.slo_attainment << ","
        << report.mean_ttft_ms << "," << report.p90_ttft_ms << "," << report.p90_tbt_ms << ","
        << report.rejected_admission << "," << report.rejected_decode << "," << rejected << ","
        << report.wasted_prefill_tokens << "," << report.fluctuation.pearson_r << ","
        << report.fluctuation.amplitude_prefill << "," << report.fluctuation.amplitude_decode
        << "\n";
    std::cout << std::left << std::setw(18) << v.name << std::right << std::setw(10)
              << report.goodput << std::setw(14) << report.mean_ttft_ms << std::setw(13)
              << report.p90_ttft_ms << std::setw(11) << rejected << std::setw(14)
              << report.wasted_prefill_tokens << std::setw(10) << std::setprecision(3)
              << report.fluctuation.pearson_r << "\n";
  }

  const fs::path out_dir(base.out_dir);
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / ("compare_" + axis + ".csv");
  write_file(csv_path, csv.str());
  std::cout << "comparison written to " << csv_path.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-driven simulator for KVCache-centric disaggregated LLM serving"};
  app.require_subcommand(1);

  ReplayOptions replay_opt;

  auto* replay = app.add_subcommand("replay", "replay a trace (or workload) through the cluster");
  replay->add_option("--config", replay_opt.config_path, "run config file");
  replay->add_option("--trace", replay_opt.trace_path, "trace file (JSON lines)");
  replay->add_option("--speedup", replay_opt.speedup, "replay speed multiplier");
  replay->add_option("--seed", replay_opt.seed, "simulation seed");
  replay->add_option("--out", replay_opt.out_dir, "output directory");
  replay->add_option("--scheduler", replay_opt.scheduler,
                     "random|load_balance|cache_aware|kvcache_centric");
  replay->add_option("--admission", replay_opt.admission, "none|baseline|early|predictive");
  replay->add_flag("--per-request", replay_opt.per_request, "also write per_request.csv");

  std::string gen_config, gen_out;
  double gen_rate = 0.0, gen_cache_ratio = -1.0;
  std::int64_t gen_count = 0, gen_input = 0, gen_output = 0, gen_seed = -1;
  auto* generate = app.add_subcommand("generate", "emit a synthetic workload as a trace file");
  generate->add_option("--config", gen_config, "run config with a [workload] section");
  generate->add_option("--rate", gen_rate, "poisson arrival rate, requests/second");
  generate->add_option("--count", gen_count, "number of requests");
  generate->add_option("--input-len", gen_input, "input tokens per request");
  generate->add_option("--output-len", gen_output, "output tokens per request");
  generate->add_option("--cache-ratio", gen_cache_ratio, "shared hot-prefix fraction [0,1]");
  generate->add_option("--seed", gen_seed, "generator seed");
  generate->add_option("--out", gen_out, "output trace path (default stdout)");

  std::string ac_trace, ac_out;
  std::vector<std::string> ac_policies, ac_capacities;
  auto* analyze = app.add_subcommand("analyze-cache", "hit-ratio grid and popularity CDF");
  analyze->add_option("--trace", ac_trace, "trace file")->required();
  analyze->add_option("--policies", ac_policies, "subset of lru,lfu,length_aware")
      ->delimiter(',');
  analyze->add_option("--capacities", ac_capacities, "block capacities, e.g. inf,50000,1000")
      ->delimiter(',');
  analyze->add_option("--out", ac_out, "output directory (default: stdout)");

  ReplayOptions compare_opt;
  std::string compare_axis;
  auto* compare = app.add_subcommand("compare", "run scheduler or admission variants");
  compare->add_option("--config", compare_opt.config_path, "run config file");
  compare->add_option("--trace", compare_opt.trace_path, "trace file");
  compare->add_option("--speedup", compare_opt.speedup, "replay speed multiplier");
  compare->add_option("--seed", compare_opt.seed, "simulation seed");
  compare->add_option("--out", compare_opt.out_dir, "output directory");
  compare->add_option("--axis", compare_axis, "scheduler | admission")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (replay->parsed()) {
      if (replay_opt.out_dir.empty()) replay_opt.out_dir = default_out_dir();
      return cmd_replay(replay_opt);
    }
    if (generate->parsed()) {
      return cmd_generate(gen_config, gen_rate, gen_count, gen_input, gen_output,
                          gen_cache_ratio, gen_seed, gen_out);
    }
    if (analyze->parsed()) {
      return cmd_analyze_cache(ac_trace, ac_policies, ac_capacities, ac_out);
    }
    if (compare->parsed()) {
      if (compare_opt.out_dir.empty()) compare_opt.out_dir = default_out_dir();
      return cmd_compare(compare_opt, compare_axis);
    }
  } catch (const kvcsim::ParseError& e) {
    std::cerr << "kvcsim: " << e.what() << "\n";
    return kExitUsage;
  } catch (const kvcsim::ValidationError& e) {
    std::cerr << "kvcsim: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "kvcsim: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
