/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "kvcsim/sim_engine.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <queue>

#include "json.hpp"
#include "kvcsim/errors.hpp"
#include "kvcsim/metrics.hpp"
#include "kvcsim/rand.hpp"

namespace kvcsim {

void ClusterConfig::validate() const {
  if (prefill_instances < 1) throw ValidationError("cluster: need >= 1 prefill instance");
  if (decode_instances < 1) throw ValidationError("cluster: need >= 1 decoding instance");
  if (cache_capacity_blocks && *cache_capacity_blocks < 1) {
    throw ValidationError("cluster: cache_capacity_blocks must be >= 1 (or unset)");
  }
  if (decode_max_kv_tokens && *decode_max_kv_tokens < 1) {
    throw ValidationError("cluster: decode_max_kv_tokens must be >= 1 (or unset)");
  }
}

void SimConfig::validate() const {
  cluster.validate();
  perf.validate();
  slo.validate();
  conductor.validate();
  admission.validate();
}

const char* to_string(RequestOutcome outcome) {
  switch (outcome) {
    case RequestOutcome::kCompleted: return "completed";
    case RequestOutcome::kRejectedAdmission: return "rejected_admission";
    case RequestOutcome::kRejectedDecode: return "rejected_decode";
  }
  return "?";
}

const char* to_string(RejectDetail detail) {
  switch (detail) {
    case RejectDetail::kNone: return "none";
    case RejectDetail::kAdmissionPolicy: return "admission_policy";
    case RejectDetail::kSchedulerTtftSlo: return "scheduler_ttft_slo";
    case RejectDetail::kSchedulerTbtSlo: return "scheduler_tbt_slo";
    case RejectDetail::kBaselineDecodeGate: return "baseline_decode_gate";
    case RejectDetail::kDecodeDoubleCheck: return "decode_double_check";
  }
  return "?";
}

bool within_slo(double ttft_ms, double max_tbt_ms, const SLOConfig& slo) {
  return ttft_ms <= slo.l_ttft_ms && max_tbt_ms <= slo.l_tbt_ms;
}

namespace {

// Tie-break order at equal times: instance-freeing completions first, then
// iteration boundaries (departures), then joins, then samples last.
enum class Ev : int {
  kPrefillDone = 0,
  kMigrationBegin = 1,
  kMigrationDone = 2,
  kTransferDone = 3,
  kDecodeIteration = 4,
  kDecodeJoin = 5,
  kPrefillStart = 6,
  kArrival = 7,
  kLoadSample = 8,
};

const char* ev_name(Ev kind) {
  switch (kind) {
    case Ev::kPrefillDone: return "prefill_done";
    case Ev::kMigrationBegin: return "migration_begin";
    case Ev::kMigrationDone: return "migration_done";
    case Ev::kTransferDone: return "transfer_done";
    case Ev::kDecodeIteration: return "decode_iteration";
    case Ev::kDecodeJoin: return "decode_join";
    case Ev::kPrefillStart: return "prefill_start";
    case Ev::kArrival: return "arrival";
    case Ev::kLoadSample: return "load_sample";
  }
  return "?";
}

struct Event {
  double time = 0.0;
  Ev kind = Ev::kArrival;
  std::uint64_t seq = 0;
  std::int64_t a = -1;  // request id or migration index
  int b = -1;           // instance id
};

struct EventAfter {
  bool operator()(const Event& x, const Event& y) const {
    if (x.time != y.time) return x.time > y.time;
    if (x.kind != y.kind) return static_cast<int>(x.kind) > static_cast<int>(y.kind);
    return x.seq > y.seq;
  }
};

struct RequestState {
  const RequestRecord* rec = nullptr;
  bool terminal = false;

  int prefill_id = -1;
  int decode_id = -1;
  std::size_t local_prefix = 0;
  std::size_t used_prefix = 0;
  double exec_est_ms = 0.0;
  std::int64_t computed_tokens = 0;
  double transfer_ready_ms = 0.0;  // incoming migration completion gate
  std::int64_t migration_index = -1;
  bool start_event_pending = false;

  double prefill_start_ms = -1.0;
  double stream_done_ms = -1.0;
  double decode_started_ms = -1.0;

  std::int64_t tokens_generated = 0;
  double last_token_ms = -1.0;
  double ttft_ms = 0.0;
  double max_tbt_ms = 0.0;
  std::size_t tbt_count = 0;

  RequestOutcome outcome = RequestOutcome::kCompleted;
  RejectDetail reject_detail = RejectDetail::kNone;
  bool in_slo = false;
  std::int64_t wasted_prefill = 0;
};

struct Migration {
  std::int64_t rid = -1;
  int source_id = -1;
  int dest_id = -1;
  std::size_t chain_begin = 0;
  std::size_t chain_end = 0;
  bool aborted = false;
};

struct PrefillInstance {
  int id = 0;
  CachePool pool;
  std::deque<std::int64_t> queue;
  double queued_work_ms = 0.0;
  std::int64_t in_flight = -1;
  double busy_until_ms = 0.0;
  double sender_busy_until_ms = 0.0;

  PrefillInstance(int id_, std::optional<std::size_t> capacity, CachePolicy policy)
      : id(id_), pool(capacity, policy) {}
};

struct BatchMember {
  std::int64_t rid = -1;
  std::int64_t kv_tokens = 0;
};

struct DecodeInstance {
  int id = 0;
  std::vector<BatchMember> batch;
  std::deque<std::int64_t> pending_joins;
  std::int64_t kv_in_batch = 0;
  std::int64_t kv_pending = 0;
  std::optional<std::int64_t> max_kv;
  bool iterating = false;
  double iteration_started_ms = 0.0;
};

class Engine {
 public:
  Engine(const std::vector<RequestRecord>& trace, const SimConfig& config,
         EngineTrace* engine_trace)
      : trace_(trace), config_(config), rng_(config.seed), engine_trace_(engine_trace) {}

  SimReport run();

 private:
  void push(double time, Ev kind, std::int64_t a, int b = -1) {
    if (kind != Ev::kLoadSample) ++pending_work_;
    events_.push(Event{time, kind, seq_++, a, b});
  }
  void log(double time, Ev kind, std::int64_t rid, int instance) {
    if (engine_trace_) {
      engine_trace_->events.push_back({time, ev_name(kind), rid, instance});
    }
  }

  std::vector<PrefillSnapshot> prefill_snapshots() const;
  std::vector<DecodeSnapshot> decode_snapshots() const;
  DecodeLoadSnapshot decode_load_snapshot(double now) const;

  void set_decided_prefix(RequestState& r, std::size_t prefix_blocks);

  void on_arrival(double now, std::int64_t rid);
  void on_prefill_start(double now, std::int64_t rid, int pid);
  void on_prefill_done(double now, std::int64_t rid, int pid);
  void on_transfer_done(double now, std::int64_t rid);
  void on_decode_join(double now, std::int64_t rid);
  void on_decode_iteration(double now, int did);
  void on_migration_begin(double now, std::int64_t mid);
  void on_migration_done(double now, std::int64_t mid);
  void on_load_sample(double now);

  void try_start_prefill(double now, PrefillInstance& p);
  void attempt_join(double now, std::int64_t rid);
  void retry_deferred_joins(double now);
  void start_decode_loop(double now, DecodeInstance& d);

  void reject_at_admission(RequestState& r, RejectDetail detail);
  void reject_at_decode(RequestState& r, RejectDetail detail);
  void complete_request(RequestState& r);

  SimReport finalize();

  const std::vector<RequestRecord>& trace_;
  SimConfig config_;
  Rng rng_;
  EngineTrace* engine_trace_ = nullptr;

  std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
  std::uint64_t seq_ = 0;
  std::int64_t pending_work_ = 0;  // queued events that are not load samples

  std::vector<RequestState> requests_;
  std::vector<PrefillInstance> prefills_;
  std::vector<DecodeInstance> decodes_;
  std::vector<Migration> migrations_;
  std::map<std::int64_t, double> in_stream_;  // prefill done, KVCache still streaming
  std::deque<std::int64_t> deferred_joins_;   // waiting for decode KV capacity

  std::vector<LoadSample> load_series_;
  std::vector<double> all_ttft_;
  std::vector<double> all_tbt_;
  double derived_t_d_ms_ = 0.0;

  SimReport report_;
};

std::vector<PrefillSnapshot> Engine::prefill_snapshots() const {
  std::vector<PrefillSnapshot> snaps;
  snaps.reserve(prefills_.size());
  for (const auto& p : prefills_) {
    snaps.push_back({p.id, &p.pool, p.busy_until_ms, p.sender_busy_until_ms, p.queued_work_ms});
  }
  return snaps;
}

std::vector<DecodeSnapshot> Engine::decode_snapshots() const {
  std::vector<DecodeSnapshot> snaps;
  snaps.reserve(decodes_.size());
  for (const auto& d : decodes_) {
    snaps.push_back({d.id, static_cast<std::int64_t>(d.batch.size() + d.pending_joins.size()),
                     d.kv_in_batch + d.kv_pending, d.max_kv});
  }
  return snaps;
}

DecodeLoadSnapshot Engine::decode_load_snapshot(double now) const {
  DecodeLoadSnapshot snap;
  snap.instances.resize(decodes_.size());
  for (std::size_t i = 0; i < decodes_.size(); ++i) {
    auto& inst = snap.instances[i];
    for (const auto& m : decodes_[i].batch) {
      inst.residents.push_back({requests_[m.rid].decode_started_ms, m.kv_tokens});
    }
    for (std::int64_t rid : decodes_[i].pending_joins) {
      inst.residents.push_back(
          {requests_[rid].decode_started_ms, requests_[rid].rec->input_length});
    }
  }

  struct Entry {
    double completion;
    std::int64_t rid;
    std::int64_t kv;
  };
  std::vector<Entry> entries;
  for (const auto& p : prefills_) {
    if (p.in_flight >= 0) {
      entries.push_back({p.busy_until_ms, p.in_flight, requests_[p.in_flight].rec->input_length});
    }
    double cursor = std::max(now, p.busy_until_ms);
    for (std::int64_t rid : p.queue) {
      const auto& r = requests_[rid];
      const double start = std::max(cursor, r.transfer_ready_ms);
      cursor = start + r.exec_est_ms;
      entries.push_back({cursor, rid, r.rec->input_length});
    }
  }
  for (const auto& [rid, done] : in_stream_) {
    entries.push_back({std::max(now, done), rid, requests_[rid].rec->input_length});
  }
  for (std::int64_t rid : deferred_joins_) {
    entries.push_back({now, rid, requests_[rid].rec->input_length});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.completion != b.completion) return a.completion < b.completion;
    return a.rid < b.rid;
  });
  snap.pipeline.reserve(entries.size());
  for (const auto& e : entries) {
    snap.pipeline.push_back({e.completion, e.kv});
  }
  return snap;
}

void Engine::set_decided_prefix(RequestState& r, std::size_t prefix_blocks) {
  const std::int64_t cached =
      std::min(static_cast<std::int64_t>(prefix_blocks) * config_.conductor.block_size,
               r.rec->input_length);
  r.used_prefix = prefix_blocks;
  r.exec_est_ms = prefill_execution_ms(r.rec->input_length, cached, config_.perf);
  r.computed_tokens = r.rec->input_length - cached;
}

void Engine::reject_at_admission(RequestState& r, RejectDetail detail) {
  r.terminal = true;
  r.outcome = RequestOutcome::kRejectedAdmission;
  r.reject_detail = detail;
}

void Engine::reject_at_decode(RequestState& r, RejectDetail detail) {
  r.terminal = true;
  r.outcome = RequestOutcome::kRejectedDecode;
  r.reject_detail = detail;
  r.wasted_prefill = r.computed_tokens;
}

void Engine::complete_request(RequestState& r) {
  r.terminal = true;
  r.outcome = RequestOutcome::kCompleted;
  r.in_slo = within_slo(r.ttft_ms, r.max_tbt_ms, config_.slo);
  all_ttft_.push_back(r.ttft_ms);
}

void Engine::on_arrival(double now, std::int64_t rid) {
  RequestState& r = requests_[rid];
  log(now, Ev::kArrival, rid, -1);

  const auto psnaps = prefill_snapshots();
  const auto dsnaps = decode_snapshots();
  const auto& adm = config_.admission;

  if (adm.policy != AdmissionPolicy::kNone) {
    const double p_load = measure_prefill_load(psnaps, config_.slo, now);
    bool admitted = true;
    switch (adm.policy) {
      case AdmissionPolicy::kBaseline:
        admitted = baseline_admits(p_load, adm.load_threshold);
        break;
      case AdmissionPolicy::kEarly: {
        const double d_load = measure_decode_load(dsnaps, config_.slo, config_.perf);
        admitted = early_rejection_admits(p_load, d_load, adm.load_threshold);
        break;
      }
      case AdmissionPolicy::kPredictive: {
        PredictionConfig pred = adm.prediction;
        pred.t_d_ms = derived_t_d_ms_;
        const double predicted = predict_decode_load(decode_load_snapshot(now), now, pred,
                                                     config_.slo, config_.perf);
        admitted = predictive_admits(p_load, predicted, adm.load_threshold);
        break;
      }
      case AdmissionPolicy::kNone:
        break;
    }
    if (!admitted) {
      reject_at_admission(r, RejectDetail::kAdmissionPolicy);
      return;
    }
  }

  const ScheduleContext ctx{psnaps, dsnaps, config_.slo, config_.conductor, config_.perf, now};
  const SchedulingDecision decision = schedule(*r.rec, ctx, config_.scheduler, &rng_);
  if (!decision.accepted) {
    reject_at_admission(r, decision.reject_reason == RejectReason::kTbtSlo
                               ? RejectDetail::kSchedulerTbtSlo
                               : RejectDetail::kSchedulerTtftSlo);
    return;
  }

  r.prefill_id = decision.prefill_id;
  r.decode_id = decision.decode_id;
  r.local_prefix = decision.local_prefix_blocks;
  set_decided_prefix(r, decision.used_prefix_blocks);
  ++report_.accepted;

  PrefillInstance& p = prefills_[static_cast<std::size_t>(decision.prefill_id)];
  const std::span<const BlockId> chain(r.rec->hash_ids);

  if (decision.migration) {
    // The transferred range is not referenced locally; it lands through
    // insert_replicated when the migration completes.
    p.pool.admit_and_touch(chain, decision.local_prefix_blocks, decision.used_prefix_blocks);

    PrefillInstance& src = prefills_[static_cast<std::size_t>(decision.migration->source_id)];
    const auto payload_blocks =
        static_cast<std::int64_t>(decision.used_prefix_blocks - decision.local_prefix_blocks);
    const double payload_ms =
        estimate_transfer_time(payload_blocks * config_.conductor.block_size, config_.perf);
    const double begin = std::max(now, src.sender_busy_until_ms);
    const double done = begin + payload_ms;
    src.sender_busy_until_ms = done;

    r.migration_index = static_cast<std::int64_t>(migrations_.size());
    r.transfer_ready_ms = done;
    migrations_.push_back({rid, src.id, p.id, decision.local_prefix_blocks,
                           decision.used_prefix_blocks, false});
    ++report_.migrations_emitted;
    push(begin, Ev::kMigrationBegin, r.migration_index);
    push(done, Ev::kMigrationDone, r.migration_index);
  } else {
    p.pool.admit_and_touch(chain);
    r.transfer_ready_ms = now;
  }

  p.queue.push_back(rid);
  p.queued_work_ms += r.exec_est_ms;
  try_start_prefill(now, p);
}

void Engine::try_start_prefill(double now, PrefillInstance& p) {
  if (p.in_flight >= 0 || p.queue.empty()) return;
  const std::int64_t rid = p.queue.front();
  RequestState& head = requests_[rid];
  if (head.transfer_ready_ms > now) {
    if (!head.start_event_pending) {
      head.start_event_pending = true;
      push(head.transfer_ready_ms, Ev::kPrefillStart, rid, p.id);
    }
    return;
  }
  p.queue.pop_front();
  p.queued_work_ms -= head.exec_est_ms;
  p.in_flight = rid;
  p.busy_until_ms = now + head.exec_est_ms;
  head.prefill_start_ms = now;
  log(now, Ev::kPrefillStart, rid, p.id);
  push(p.busy_until_ms, Ev::kPrefillDone, rid, p.id);
}

void Engine::on_prefill_start(double now, std::int64_t rid, int pid) {
  requests_[rid].start_event_pending = false;
  try_start_prefill(now, prefills_[static_cast<std::size_t>(pid)]);
}

void Engine::on_prefill_done(double now, std::int64_t rid, int pid) {
  RequestState& r = requests_[rid];
  PrefillInstance& p = prefills_[static_cast<std::size_t>(pid)];
  log(now, Ev::kPrefillDone, rid, pid);
  p.in_flight = -1;

  // Layer-wise streaming overlaps the prefill itself; the stream is done at
  // the later of compute end and full-KV wire time from prefill start.
  const double stream_ms = static_cast<double>(r.rec->input_length) *
                           config_.perf.kv_bytes_per_token / config_.perf.link_bandwidth;
  r.stream_done_ms = std::max(now, r.prefill_start_ms + stream_ms);
  in_stream_.emplace(rid, r.stream_done_ms);
  push(r.stream_done_ms, Ev::kTransferDone, rid, pid);

  try_start_prefill(now, p);
}

void Engine::on_transfer_done(double now, std::int64_t rid) {
  log(now, Ev::kTransferDone, rid, requests_[rid].prefill_id);
  in_stream_.erase(rid);
  push(now, Ev::kDecodeJoin, rid);
}

void Engine::on_decode_join(double now, std::int64_t rid) {
  log(now, Ev::kDecodeJoin, rid, requests_[rid].decode_id);
  attempt_join(now, rid);
}

void Engine::attempt_join(double now, std::int64_t rid) {
  RequestState& r = requests_[rid];
  const std::int64_t kv = r.rec->input_length;

  if (config_.admission.policy == AdmissionPolicy::kBaseline) {
    const double d_load = measure_decode_load(decode_snapshots(), config_.slo, config_.perf);
    if (!baseline_admits(d_load, config_.admission.load_threshold)) {
      reject_at_decode(r, RejectDetail::kBaselineDecodeGate);
      return;
    }
  }

  // The local scheduler double-checks the TBT SLO against the then-current
  // batches; every decoding instance is a candidate, capacity permitting.
  DecodeInstance* best = nullptr;
  double best_tbt = 0.0;
  for (auto& d : decodes_) {
    if (d.max_kv && d.kv_in_batch + d.kv_pending + kv > *d.max_kv) continue;
    const auto batch = static_cast<std::int64_t>(d.batch.size() + d.pending_joins.size());
    const double tbt =
        decode_iteration_time(batch + 1, d.kv_in_batch + d.kv_pending + kv, config_.perf);
    if (best == nullptr || tbt < best_tbt) {
      best = &d;
      best_tbt = tbt;
    }
  }
  if (best == nullptr) {
    deferred_joins_.push_back(rid);  // no VRAM headroom anywhere; wait for departures
    return;
  }
  if (best_tbt > config_.slo.l_tbt_ms) {
    reject_at_decode(r, RejectDetail::kDecodeDoubleCheck);
    return;
  }

  r.decode_id = best->id;
  r.decode_started_ms = now;
  best->pending_joins.push_back(rid);
  best->kv_pending += kv;
  if (!best->iterating) start_decode_loop(now, *best);
}

void Engine::retry_deferred_joins(double now) {
  if (deferred_joins_.empty()) return;
  std::deque<std::int64_t> waiting;
  waiting.swap(deferred_joins_);
  while (!waiting.empty()) {
    const std::int64_t rid = waiting.front();
    waiting.pop_front();
    attempt_join(now, rid);
  }
}

void Engine::start_decode_loop(double now, DecodeInstance& d) {
  while (!d.pending_joins.empty()) {
    const std::int64_t rid = d.pending_joins.front();
    d.pending_joins.pop_front();
    const std::int64_t kv = requests_[rid].rec->input_length;
    d.kv_pending -= kv;
    d.kv_in_batch += kv;
    d.batch.push_back({rid, kv});
  }
  d.iterating = true;
  d.iteration_started_ms = now;
  const double iter = decode_iteration_time(static_cast<std::int64_t>(d.batch.size()),
                                            d.kv_in_batch, config_.perf);
  push(now + iter, Ev::kDecodeIteration, -1, d.id);
}

void Engine::on_decode_iteration(double now, int did) {
  DecodeInstance& d = decodes_[static_cast<std::size_t>(did)];
  log(now, Ev::kDecodeIteration, -1, did);

  // The iteration that began at iteration_started_ms completes now: one token
  // per batched request, departures at the boundary.
  std::vector<BatchMember> keep;
  keep.reserve(d.batch.size());
  for (auto& m : d.batch) {
    RequestState& r = requests_[m.rid];
    ++r.tokens_generated;
    if (r.tokens_generated == 1) {
      r.ttft_ms = now - static_cast<double>(r.rec->timestamp_ms);
    } else {
      const double gap = now - r.last_token_ms;
      r.max_tbt_ms = std::max(r.max_tbt_ms, gap);
      ++r.tbt_count;
      all_tbt_.push_back(gap);
    }
    r.last_token_ms = now;
    ++m.kv_tokens;
    ++d.kv_in_batch;
    if (r.tokens_generated >= r.rec->output_length) {
      d.kv_in_batch -= m.kv_tokens;
      complete_request(r);
    } else {
      keep.push_back(m);
    }
  }
  d.batch.swap(keep);

  // Departures freed capacity: deferred requests get the first shot, then this
  // instance's committed joins enter the next iteration.
  retry_deferred_joins(now);
  while (!d.pending_joins.empty()) {
    const std::int64_t rid = d.pending_joins.front();
    d.pending_joins.pop_front();
    const std::int64_t kv = requests_[rid].rec->input_length;
    d.kv_pending -= kv;
    d.kv_in_batch += kv;
    d.batch.push_back({rid, kv});
  }

  if (!d.batch.empty()) {
    d.iteration_started_ms = now;
    const double iter = decode_iteration_time(static_cast<std::int64_t>(d.batch.size()),
                                              d.kv_in_batch, config_.perf);
    push(now + iter, Ev::kDecodeIteration, -1, d.id);
  } else {
    d.iterating = false;
  }
}

void Engine::on_migration_begin(double now, std::int64_t mid) {
  Migration& m = migrations_[static_cast<std::size_t>(mid)];
  log(now, Ev::kMigrationBegin, m.rid, m.dest_id);
  const auto& chain = requests_[m.rid].rec->hash_ids;
  const CachePool& src = prefills_[static_cast<std::size_t>(m.source_id)].pool;
  for (std::size_t i = m.chain_begin; i < m.chain_end; ++i) {
    if (!src.contains(chain[i])) {
      m.aborted = true;
      break;
    }
  }
  if (!m.aborted) return;

  // The source evicted part of the range before the link freed up: the request
  // falls back to computing from its local prefix.
  ++report_.migrations_aborted;
  RequestState& r = requests_[m.rid];
  PrefillInstance& dest = prefills_[static_cast<std::size_t>(m.dest_id)];
  if (r.prefill_start_ms < 0) {
    const double old_exec = r.exec_est_ms;
    set_decided_prefix(r, r.local_prefix);
    // The blocks it now computes itself still become resident locally.
    const std::span<const BlockId> range(chain.data() + m.chain_begin,
                                         m.chain_end - m.chain_begin);
    dest.pool.insert_replicated(range, m.chain_begin);
    for (std::int64_t queued : dest.queue) {
      if (queued == m.rid) {
        dest.queued_work_ms += r.exec_est_ms - old_exec;
        break;
      }
    }
    r.transfer_ready_ms = now;
    try_start_prefill(now, dest);
  }
}

void Engine::on_migration_done(double now, std::int64_t mid) {
  const Migration& m = migrations_[static_cast<std::size_t>(mid)];
  if (m.aborted) return;
  log(now, Ev::kMigrationDone, m.rid, m.dest_id);
  const auto& chain = requests_[m.rid].rec->hash_ids;
  const std::span<const BlockId> range(chain.data() + m.chain_begin,
                                       m.chain_end - m.chain_begin);
  prefills_[static_cast<std::size_t>(m.dest_id)].pool.insert_replicated(range, m.chain_begin);
  ++report_.migrations_completed;
}

void Engine::on_load_sample(double now) {
  if (pending_work_ == 0) return;  // cluster drained; stop sampling
  LoadSample sample;
  sample.time_ms = now;
  sample.prefill_load = measure_prefill_load(prefill_snapshots(), config_.slo, now);
  sample.decode_load = measure_decode_load(decode_snapshots(), config_.slo, config_.perf);
  load_series_.push_back(sample);
  log(now, Ev::kLoadSample, -1, -1);
  push(now + config_.admission.prediction.sample_period_ms, Ev::kLoadSample, -1, -1);
}

SimReport Engine::run() {
  config_.validate();
  for (std::size_t i = 1; i < trace_.size(); ++i) {
    if (trace_[i].timestamp_ms < trace_[i - 1].timestamp_ms) {
      throw ValidationError("run: trace must be sorted by timestamp");
    }
  }
  if (config_.cluster.decode_max_kv_tokens) {
    for (const auto& rec : trace_) {
      if (rec.input_length + rec.output_length > *config_.cluster.decode_max_kv_tokens) {
        throw ValidationError("run: decode_max_kv_tokens smaller than request " +
                              std::to_string(rec.request_id) + " needs (" +
                              std::to_string(rec.input_length + rec.output_length) +
                              " tokens)");
      }
    }
  }

  prefills_.reserve(static_cast<std::size_t>(config_.cluster.prefill_instances));
  for (int i = 0; i < config_.cluster.prefill_instances; ++i) {
    prefills_.emplace_back(i, config_.cluster.cache_capacity_blocks,
                           config_.cluster.cache_policy);
  }
  decodes_.resize(static_cast<std::size_t>(config_.cluster.decode_instances));
  for (int i = 0; i < config_.cluster.decode_instances; ++i) {
    decodes_[static_cast<std::size_t>(i)].id = i;
    decodes_[static_cast<std::size_t>(i)].max_kv = config_.cluster.decode_max_kv_tokens;
  }

  requests_.resize(trace_.size());
  double mean_in = 0.0, mean_out = 0.0;
  for (std::size_t i = 0; i < trace_.size(); ++i) {
    requests_[i].rec = &trace_[i];
    mean_in += static_cast<double>(trace_[i].input_length);
    mean_out += static_cast<double>(trace_[i].output_length);
  }
  if (!trace_.empty()) {
    mean_in /= static_cast<double>(trace_.size());
    mean_out /= static_cast<double>(trace_.size());
  }
  // Uniform decode duration for load prediction: mean output length times the
  // single-request iteration time, unless pinned in the config.
  derived_t_d_ms_ = config_.admission.prediction.t_d_ms > 0
                        ? config_.admission.prediction.t_d_ms
                        : mean_out * decode_iteration_time(
                                         1, static_cast<std::int64_t>(mean_in), config_.perf);

  for (std::size_t i = 0; i < trace_.size(); ++i) {
    push(static_cast<double>(trace_[i].timestamp_ms), Ev::kArrival,
         static_cast<std::int64_t>(i));
  }
  push(0.0, Ev::kLoadSample, -1, -1);

  while (!events_.empty()) {
    const Event ev = events_.top();
    events_.pop();
    if (ev.kind != Ev::kLoadSample) --pending_work_;
    switch (ev.kind) {
      case Ev::kArrival: on_arrival(ev.time, ev.a); break;
      case Ev::kPrefillStart: on_prefill_start(ev.time, ev.a, ev.b); break;
      case Ev::kPrefillDone: on_prefill_done(ev.time, ev.a, ev.b); break;
      case Ev::kTransferDone: on_transfer_done(ev.time, ev.a); break;
      case Ev::kDecodeJoin: on_decode_join(ev.time, ev.a); break;
      case Ev::kDecodeIteration: on_decode_iteration(ev.time, ev.b); break;
      case Ev::kMigrationBegin: on_migration_begin(ev.time, ev.a); break;
      case Ev::kMigrationDone: on_migration_done(ev.time, ev.a); break;
      case Ev::kLoadSample: on_load_sample(ev.time); break;
    }
  }
  return finalize();
}

SimReport Engine::finalize() {
  SimReport report = std::move(report_);
  report.arrived = static_cast<std::int64_t>(requests_.size());
  report.derived_t_d_ms = derived_t_d_ms_;

  report.requests.reserve(requests_.size());
  for (const RequestState& r : requests_) {
    RequestReport rr;
    rr.request_id = r.rec->request_id;
    rr.arrival_ms = r.rec->timestamp_ms;
    rr.outcome = r.outcome;
    rr.reject_detail = r.reject_detail;
    rr.within_slo = r.in_slo;
    rr.ttft_ms = r.ttft_ms;
    rr.max_tbt_ms = r.max_tbt_ms;
    rr.tbt_samples = r.tbt_count;
    rr.computed_prefill_tokens =
        r.outcome == RequestOutcome::kRejectedAdmission ? 0 : r.computed_tokens;
    rr.wasted_prefill_tokens = r.wasted_prefill;
    rr.output_tokens = r.tokens_generated;
    rr.prefill_id = r.prefill_id;
    rr.decode_id = r.decode_id;
    rr.reused_prefix_blocks = r.used_prefix;

    switch (r.outcome) {
      case RequestOutcome::kCompleted:
        ++report.completed;
        if (r.in_slo) {
          ++report.goodput;
        } else {
          ++report.slo_violated;
          report.wasted_tokens_slo_violation += r.computed_tokens + r.tokens_generated;
        }
        break;
      case RequestOutcome::kRejectedAdmission:
        ++report.rejected_admission;
        if (r.reject_detail == RejectDetail::kAdmissionPolicy) {
          ++report.rejected_admission_policy;
        } else {
          ++report.rejected_scheduler;
        }
        break;
      case RequestOutcome::kRejectedDecode:
        ++report.rejected_decode;
        if (r.reject_detail == RejectDetail::kBaselineDecodeGate) {
          ++report.rejected_decode_gate;
        } else {
          ++report.rejected_double_check;
        }
        report.wasted_prefill_tokens += r.wasted_prefill;
        break;
    }
    report.requests.push_back(rr);
  }

  report.ttft_ms = std::move(all_ttft_);
  report.tbt_ms = std::move(all_tbt_);
  report.load_series = std::move(load_series_);

  report.mean_ttft_ms = mean(report.ttft_ms);
  report.p90_ttft_ms = percentile(report.ttft_ms, 90.0);
  report.mean_tbt_ms = mean(report.tbt_ms);
  report.p90_tbt_ms = percentile(report.tbt_ms, 90.0);
  report.normalized_p90_ttft = report.p90_ttft_ms / config_.slo.l_ttft_ms;
  report.normalized_p90_tbt = report.p90_tbt_ms / config_.slo.l_tbt_ms;
  report.slo_attainment =
      report.arrived == 0
          ? 0.0
          : static_cast<double>(report.goodput) / static_cast<double>(report.arrived);

  for (const auto& p : prefills_) {
    report.cache_hits += p.pool.stats().hits;
    report.cache_misses += p.pool.stats().misses;
  }
  if (report.load_series.size() >= 2) {
    report.fluctuation = fluctuation_stats(report.load_series);
  } else {
    report.fluctuation.degenerate = true;
  }
  return report;
}

}  // namespace

SimReport run(const std::vector<RequestRecord>& trace, const SimConfig& config,
              EngineTrace* engine_trace) {
  Engine engine(trace, config, engine_trace);
  return engine.run();
}

std::string SimReport::to_json_string(bool include_requests) const {
  nlohmann::json j;
  j["arrived"] = arrived;
  j["accepted"] = accepted;
  j["completed"] = completed;
  j["goodput"] = goodput;
  j["slo_violated"] = slo_violated;
  j["slo_attainment"] = slo_attainment;
  j["rejected_admission"] = rejected_admission;
  j["rejected_admission_policy"] = rejected_admission_policy;
  j["rejected_scheduler"] = rejected_scheduler;
  j["rejected_decode"] = rejected_decode;
  j["rejected_decode_gate"] = rejected_decode_gate;
  j["rejected_double_check"] = rejected_double_check;
  j["wasted_prefill_tokens"] = wasted_prefill_tokens;
  j["wasted_tokens_slo_violation"] = wasted_tokens_slo_violation;
  j["mean_ttft_ms"] = mean_ttft_ms;
  j["p90_ttft_ms"] = p90_ttft_ms;
  j["mean_tbt_ms"] = mean_tbt_ms;
  j["p90_tbt_ms"] = p90_tbt_ms;
  j["normalized_p90_ttft"] = normalized_p90_ttft;
  j["normalized_p90_tbt"] = normalized_p90_tbt;
  j["cache_hits"] = cache_hits;
  j["cache_misses"] = cache_misses;
  j["migrations_emitted"] = migrations_emitted;
  j["migrations_completed"] = migrations_completed;
  j["migrations_aborted"] = migrations_aborted;
  j["derived_t_d_ms"] = derived_t_d_ms;
  j["fluctuation"] = {{"pearson_r", fluctuation.pearson_r},
                      {"amplitude_prefill", fluctuation.amplitude_prefill},
                      {"amplitude_decode", fluctuation.amplitude_decode},
                      {"degenerate", fluctuation.degenerate}};

  auto series = nlohmann::json::array();
  for (const auto& s : load_series) {
    series.push_back({{"time_ms", s.time_ms},
                      {"prefill_load", s.prefill_load},
                      {"decode_load", s.decode_load}});
  }
  j["load_series"] = std::move(series);

  if (include_requests) {
    auto reqs = nlohmann::json::array();
    for (const auto& r : requests) {
      reqs.push_back({{"request_id", r.request_id},
                      {"arrival_ms", r.arrival_ms},
                      {"outcome", to_string(r.outcome)},
                      {"reject_detail", to_string(r.reject_detail)},
                      {"within_slo", r.within_slo},
                      {"ttft_ms", r.ttft_ms},
                      {"max_tbt_ms", r.max_tbt_ms},
                      {"tbt_samples", r.tbt_samples},
                      {"computed_prefill_tokens", r.computed_prefill_tokens},
                      {"wasted_prefill_tokens", r.wasted_prefill_tokens},
                      {"output_tokens", r.output_tokens},
                      {"prefill_id", r.prefill_id},
                      {"decode_id", r.decode_id},
                      {"reused_prefix_blocks", r.reused_prefix_blocks}});
    }
    j["requests"] = std::move(reqs);
  }
  return j.dump();
}

}  // namespace kvcsim
