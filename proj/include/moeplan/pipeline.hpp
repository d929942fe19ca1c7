#pragma once

// Per-iteration event DAG for target verification and draft generation,
// deterministic topological list scheduling, the iteration-time estimator,
// and Chrome-trace timeline emission.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "moeplan/config.hpp"
#include "moeplan/memory.hpp"
#include "moeplan/roofline.hpp"

namespace moeplan {

enum class EventKind {
  GPU_OTHER1,
  CPU_ATTN,
  GPU_OTHER2,
  GPU_MOE,
  H2D_EXPERTS,
  DRAFT_GPU_STEP,
  DRAFT_CPU_ATTN,
  DRAFT_GPU_FFN,
  OVERHEAD,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::GPU_OTHER1: return "GPU_OTHER1";
    case EventKind::CPU_ATTN: return "CPU_ATTN";
    case EventKind::GPU_OTHER2: return "GPU_OTHER2";
    case EventKind::GPU_MOE: return "GPU_MOE";
    case EventKind::H2D_EXPERTS: return "H2D_EXPERTS";
    case EventKind::DRAFT_GPU_STEP: return "DRAFT_GPU_STEP";
    case EventKind::DRAFT_CPU_ATTN: return "DRAFT_CPU_ATTN";
    case EventKind::DRAFT_GPU_FFN: return "DRAFT_GPU_FFN";
    case EventKind::OVERHEAD: return "OVERHEAD";
  }
  return "?";
}

enum class ExecResource { GPU = 0, CPU = 1, H2D = 2 };

inline const char* to_string(ExecResource r) {
  switch (r) {
    case ExecResource::GPU: return "GPU";
    case ExecResource::CPU: return "CPU";
    case ExecResource::H2D: return "H2D";
  }
  return "?";
}

struct EventNode {
  int id = 0;
  EventKind kind = EventKind::GPU_OTHER1;
  ExecResource resource = ExecResource::GPU;
  double duration = 0;  // seconds
  std::vector<int> deps;
  std::string label;
};

using EventDag = std::vector<EventNode>;

struct Schedule {
  std::vector<double> start;
  std::vector<double> end;
  double makespan = 0;
  std::array<double, 3> busy = {0, 0, 0};  // indexed by ExecResource

  double busy_time(ExecResource r) const { return busy[std::size_t(r)]; }
};

// Deterministic list schedule: events processed in topological order with
// ties broken by id; start = max(resource-free time, dep ends).
inline Schedule simulate(const EventDag& dag) {
  const std::size_t n = dag.size();
  Schedule sched;
  sched.start.assign(n, 0.0);
  sched.end.assign(n, 0.0);

  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const auto& ev : dag) {
    if (ev.id < 0 || std::size_t(ev.id) >= n)
      throw std::invalid_argument("simulate: event id out of range");
    for (int d : ev.deps) {
      if (d < 0 || std::size_t(d) >= n)
        throw std::invalid_argument("simulate: dep id out of range");
      out[std::size_t(d)].push_back(ev.id);
      ++indegree[std::size_t(ev.id)];
    }
  }

  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(int(i));

  std::array<double, 3> resource_free = {0, 0, 0};
  std::size_t processed = 0;
  while (!ready.empty()) {
    const int id = ready.top();
    ready.pop();
    const EventNode& ev = dag[std::size_t(id)];
    // Zero-width events stamp a time but neither wait for nor hold the
    // lane; otherwise a dependency-delayed no-op would inherit or push the
    // resource clock and block work that could still fit earlier.
    double t = ev.duration > 0 ? resource_free[std::size_t(ev.resource)] : 0.0;
    for (int d : ev.deps) t = std::max(t, sched.end[std::size_t(d)]);
    sched.start[std::size_t(id)] = t;
    sched.end[std::size_t(id)] = t + ev.duration;
    if (ev.duration > 0)
      resource_free[std::size_t(ev.resource)] = sched.end[std::size_t(id)];
    sched.busy[std::size_t(ev.resource)] += ev.duration;
    sched.makespan = std::max(sched.makespan, sched.end[std::size_t(id)]);
    ++processed;
    for (int s : out[std::size_t(id)])
      if (--indegree[std::size_t(s)] == 0) ready.push(s);
  }
  if (processed != n) throw std::invalid_argument("simulate: cycle detected");
  return sched;
}

// Per-event durations of the target pipeline stages. Chain stages are
// per micro-batch; the expert transfer is per layer (shared by all
// micro-batches of that layer).
struct TargetStageDurations {
  double gpu_other1 = 0;
  double cpu_attn = 0;
  double gpu_other2 = 0;
  double gpu_moe = 0;
  double h2d_experts = 0;
  ExecResource attn_resource = ExecResource::CPU;
};

// One decode iteration of the target model: per layer x micro-batch the
// chain GPU_OTHER1 -> CPU_ATTN -> GPU_OTHER2 -> GPU_MOE; GPU_MOE of layer i
// additionally waits on that layer's expert transfer; transfers are serial
// on the link so layer i+1's may start once layer i's finishes.
inline EventDag build_target_dag(const TargetStageDurations& d,
                                 std::int64_t n_layers, std::int64_t m) {
  if (n_layers < 1) throw std::invalid_argument("build_target_dag: n_layers >= 1");
  if (m < 1) throw std::invalid_argument("build_target_dag: m >= 1");

  EventDag dag;
  int next_id = 0;
  auto add = [&](EventKind kind, ExecResource res, double dur,
                 std::vector<int> deps, std::string label) {
    EventNode ev;
    ev.id = next_id++;
    ev.kind = kind;
    ev.resource = res;
    ev.duration = dur;
    ev.deps = std::move(deps);
    ev.label = std::move(label);
    dag.push_back(std::move(ev));
    return dag.back().id;
  };

  // Stage-major emission within a layer: with ids laid out per stage, the
  // id tie-break of the list scheduler interleaves micro-batches, letting
  // micro-batch j+1's GPU stage run under micro-batch j's CPU attention
  // instead of serializing whole chains.
  int prev_h2d = -1;
  const std::size_t mb_count = std::size_t(m);
  std::vector<int> prev_moe(mb_count, -1);  // per micro-batch
  std::vector<int> o1(mb_count), at(mb_count), o2(mb_count);
  for (std::int64_t layer = 0; layer < n_layers; ++layer) {
    const std::string ls = "L" + std::to_string(layer);
    std::vector<int> h2d_deps;
    if (prev_h2d >= 0) h2d_deps.push_back(prev_h2d);
    const int h2d = add(EventKind::H2D_EXPERTS, ExecResource::H2D,
                        d.h2d_experts, h2d_deps, ls + "/H2D_EXPERTS");
    prev_h2d = h2d;
    auto tag = [&](std::int64_t mb, const char* stage) {
      return ls + "/mb" + std::to_string(mb) + "/" + stage;
    };
    for (std::int64_t mb = 0; mb < m; ++mb) {
      std::vector<int> o1_deps;
      if (prev_moe[std::size_t(mb)] >= 0)
        o1_deps.push_back(prev_moe[std::size_t(mb)]);
      o1[std::size_t(mb)] = add(EventKind::GPU_OTHER1, ExecResource::GPU,
                                d.gpu_other1, o1_deps, tag(mb, "GPU_OTHER1"));
    }
    for (std::int64_t mb = 0; mb < m; ++mb)
      at[std::size_t(mb)] = add(EventKind::CPU_ATTN, d.attn_resource,
                                d.cpu_attn, {o1[std::size_t(mb)]},
                                tag(mb, "CPU_ATTN"));
    for (std::int64_t mb = 0; mb < m; ++mb)
      o2[std::size_t(mb)] = add(EventKind::GPU_OTHER2, ExecResource::GPU,
                                d.gpu_other2, {at[std::size_t(mb)]},
                                tag(mb, "GPU_OTHER2"));
    for (std::int64_t mb = 0; mb < m; ++mb)
      prev_moe[std::size_t(mb)] =
          add(EventKind::GPU_MOE, ExecResource::GPU, d.gpu_moe,
              {o2[std::size_t(mb)], h2d}, tag(mb, "GPU_MOE"));
  }
  return dag;
}

struct DraftStepDurations {
  double gpu_step = 0;  // GPU-only kernel, whole GPU-part batch, one step
  double cpu_attn = 0;  // CPU-part attention, one step
  double gpu_ffn = 0;   // CPU-part FFN (runs on GPU), one step
};

// k sequential draft steps. Within a step the GPU-only kernel runs
// concurrently with the CPU-part attention, whose output feeds the GPU FFN;
// step t+1 waits for both parts of step t.
inline EventDag build_draft_dag(const DraftStepDurations& d, int k,
                                std::int64_t gpu_split_requests,
                                std::int64_t cpu_split_requests) {
  if (k < 1) throw std::invalid_argument("build_draft_dag: k >= 1");
  EventDag dag;
  int next_id = 0;
  auto add = [&](EventKind kind, ExecResource res, double dur,
                 std::vector<int> deps, std::string label) {
    EventNode ev;
    ev.id = next_id++;
    ev.kind = kind;
    ev.resource = res;
    ev.duration = dur;
    ev.deps = std::move(deps);
    ev.label = std::move(label);
    dag.push_back(std::move(ev));
    return dag.back().id;
  };

  std::vector<int> prev_step_ends;
  for (int step = 0; step < k; ++step) {
    const std::string tag = "draft/step" + std::to_string(step) + "/";
    std::vector<int> ends;
    if (gpu_split_requests > 0) {
      ends.push_back(add(EventKind::DRAFT_GPU_STEP, ExecResource::GPU,
                         d.gpu_step, prev_step_ends, tag + "GPU_STEP"));
    }
    if (cpu_split_requests > 0) {
      const int at = add(EventKind::DRAFT_CPU_ATTN, ExecResource::CPU,
                         d.cpu_attn, prev_step_ends, tag + "CPU_ATTN");
      ends.push_back(add(EventKind::DRAFT_GPU_FFN, ExecResource::GPU,
                         d.gpu_ffn, {at}, tag + "GPU_FFN"));
    }
    prev_step_ends = std::move(ends);
  }
  return dag;
}

// Affine latency models fitted from profiles, keyed by operator kind.
// Driving variables:
//   CPU_ATTN        b * (s + k) * k
//   GPU_MOE         b * k            (verified tokens)
//   H2D_EXPERTS     bytes per layer
//   GPU_OTHER1/2    b * k
//   DRAFT_GPU_STEP  gpu_requests * prefix_len
//   DRAFT_CPU_ATTN  cpu_requests * prefix_len
//   DRAFT_GPU_FFN   cpu_requests
//   OVERHEAD        b * (k + 1)
struct AffineLatency {
  double slope = 0;      // seconds per unit of driving variable
  double intercept = 0;  // seconds
  double at(double driving) const { return intercept + slope * driving; }
};

using LatencyModel = std::map<EventKind, AffineLatency>;

inline constexpr double kDefaultOverheadSlope = 2e-5;  // s per (b*(k+1))

struct IterationBreakdown {
  double target_total = 0;
  double cpu_attention = 0;
  double gpu_moe = 0;
  double h2d_transfer = 0;
  double draft_total = 0;
  double draft_gpu_part = 0;
  double draft_cpu_part = 0;
  double others = 0;
  double iteration = 0;
};

struct IterationResult {
  IterationBreakdown breakdown;
  EventDag target_dag;
  Schedule target_schedule;
  EventDag draft_dag;
  Schedule draft_schedule;
};

namespace detail {

inline double lookup(const LatencyModel* lm, EventKind kind, double driving,
                     double analytic) {
  if (lm) {
    auto it = lm->find(kind);
    if (it != lm->end()) return std::max(0.0, it->second.at(driving));
  }
  return analytic;
}

}  // namespace detail

// Builds the draft DAG followed by the target DAG for one decode iteration
// and totals their schedules plus an overhead term affine in b and k.
// Durations come from the analytic cost vectors unless a fitted latency
// model supplies the kind. prefix_len < 1 means "use the workload's
// end-of-generation length".
inline IterationResult iteration_time(const HardwareSpec& hw,
                                      const ModelSpec& model,
                                      const WorkloadSpec& workload,
                                      const Hyperparameters& hyper,
                                      const MemoryPlan& plan,
                                      const LatencyModel* lm = nullptr,
                                      std::int64_t prefix_len = 0) {
  const std::int64_t b = hyper.b;
  if (b < 1) throw std::invalid_argument("iteration_time: b >= 1");
  const std::int64_t m = std::max<std::int64_t>(1, hyper.m);
  const int k = hyper.k;
  const std::int64_t k_eff = std::max(k, 1);  // plain decode is one query row
  const std::int64_t s = prefix_len >= 1 ? prefix_len : workload.total_len();

  // Target stage durations: per layer for the whole batch, chain stages
  // then split across micro-batches.
  TargetStageDurations d;
  if (hyper.exec_strategy.attention_placement == AttentionPlacement::CPU) {
    const CostVector ac = attention_cost_cpu(model, b, s, k_eff);
    const double t = std::max(ac.cpu_ops / hw.p_cpu, ac.cpu_mem_bytes / hw.b_cpu);
    d.cpu_attn = detail::lookup(lm, EventKind::CPU_ATTN,
                                double(b) * double(s + k_eff) * double(k_eff), t);
    d.attn_resource = ExecResource::CPU;
  } else {
    // Transfer variant keeps the chain position but occupies the GPU; the
    // link time is folded into the event duration.
    const CostVector ac = attention_cost_gpu_transfer(model, b, s);
    const double t = std::max({ac.gpu_ops * double(k_eff) / hw.p_gpu,
                               ac.gpu_mem_bytes / hw.b_gpu,
                               ac.h2d_bytes / hw.b_h2d});
    d.cpu_attn = detail::lookup(lm, EventKind::CPU_ATTN,
                                double(b) * double(s + k_eff) * double(k_eff), t);
    d.attn_resource = ExecResource::GPU;
  }

  const std::int64_t tokens = b * k_eff;
  double moe_t = 0, h2d_t = 0;
  if (hyper.exec_strategy.moe_batching == MoeBatching::LARGE_BATCH) {
    const CostVector mc = moe_cost_large_batch(model, tokens);
    moe_t = std::max(mc.gpu_ops / hw.p_gpu, mc.gpu_mem_bytes / hw.b_gpu);
    h2d_t = mc.h2d_bytes / hw.b_h2d;
  } else {
    const CostVector mc = moe_cost_batch1(model, hyper.expert_cache_miss_rate);
    moe_t = double(tokens) *
            std::max(mc.gpu_ops / hw.p_gpu, mc.gpu_mem_bytes / hw.b_gpu);
    h2d_t = double(tokens) * mc.h2d_bytes / hw.b_h2d;
  }
  d.gpu_moe = detail::lookup(lm, EventKind::GPU_MOE, double(tokens), moe_t);
  const double h2d_bytes_layer =
      3.0 * double(model.n_expert) * model.expert_size() *
      double(model.bytes_per_elem);
  d.h2d_experts = detail::lookup(lm, EventKind::H2D_EXPERTS, h2d_bytes_layer, h2d_t);
  d.gpu_other1 = detail::lookup(lm, EventKind::GPU_OTHER1, double(tokens), 0.0);
  d.gpu_other2 = detail::lookup(lm, EventKind::GPU_OTHER2, double(tokens), 0.0);

  d.gpu_other1 /= double(m);
  d.cpu_attn /= double(m);
  d.gpu_other2 /= double(m);
  d.gpu_moe /= double(m);

  IterationResult res;
  res.target_dag = build_target_dag(d, model.n_layers, m);
  res.target_schedule = simulate(res.target_dag);

  // Draft phase: the draft model generates k tokens before verification.
  if (k >= 1) {
    const std::int64_t g_req = std::min(plan.gpu_split_requests, b);
    const std::int64_t c_req = b - g_req;
    DraftStepDurations dd;
    const double kvbpt = model.draft.kv_bytes_per_token;
    const double ffn = model.draft.ffn_ops_per_token;
    dd.gpu_step = detail::lookup(
        lm, EventKind::DRAFT_GPU_STEP, double(g_req) * double(s),
        double(g_req) * double(s) * kvbpt / hw.b_gpu +
            double(g_req) * ffn / hw.p_gpu);
    dd.cpu_attn = detail::lookup(lm, EventKind::DRAFT_CPU_ATTN,
                                 double(c_req) * double(s),
                                 double(c_req) * double(s) * kvbpt / hw.b_cpu);
    dd.gpu_ffn = detail::lookup(lm, EventKind::DRAFT_GPU_FFN, double(c_req),
                                double(c_req) * ffn / hw.p_gpu);
    res.draft_dag = build_draft_dag(dd, k, g_req, c_req);
    res.draft_schedule = simulate(res.draft_dag);
  }

  IterationBreakdown& bd = res.breakdown;
  for (const auto& ev : res.target_dag) {
    switch (ev.kind) {
      case EventKind::CPU_ATTN: bd.cpu_attention += ev.duration; break;
      case EventKind::GPU_MOE: bd.gpu_moe += ev.duration; break;
      case EventKind::H2D_EXPERTS: bd.h2d_transfer += ev.duration; break;
      default: break;
    }
  }
  bd.target_total = res.target_schedule.makespan;
  for (const auto& ev : res.draft_dag) {
    if (ev.kind == EventKind::DRAFT_GPU_STEP) bd.draft_gpu_part += ev.duration;
    if (ev.kind == EventKind::DRAFT_CPU_ATTN || ev.kind == EventKind::DRAFT_GPU_FFN)
      bd.draft_cpu_part += ev.duration;
  }
  bd.draft_total = res.draft_schedule.makespan;
  bd.others = detail::lookup(lm, EventKind::OVERHEAD, double(b) * double(k + 1),
                             kDefaultOverheadSlope * double(b) * double(k + 1));
  bd.iteration = bd.target_total + bd.draft_total + bd.others;
  return res;
}

// Chrome trace-event timeline: one complete ("X") event per scheduled node,
// lanes (tid) are the three resources, times in microseconds.
inline void emit_trace(const EventDag& dag, const Schedule& sched,
                       std::ostream& out) {
  json events = json::array();
  for (const auto& ev : dag) {
    events.push_back(json{
        {"name", ev.label.empty() ? to_string(ev.kind) : ev.label},
        {"cat", to_string(ev.kind)},
        {"ph", "X"},
        {"ts", sched.start[std::size_t(ev.id)] * 1e6},
        {"dur", ev.duration * 1e6},
        {"pid", 0},
        {"tid", int(ev.resource)},
    });
  }
  json trace = json{{"traceEvents", events}, {"displayTimeUnit", "ms"}};
  // Lane names for trace viewers.
  if (!dag.empty()) {
    for (int r = 0; r < 3; ++r) {
      trace["traceEvents"].push_back(
          json{{"name", "thread_name"},
               {"ph", "M"},
               {"pid", 0},
               {"tid", r},
               {"args", {{"name", to_string(ExecResource(r))}}}});
    }
  }
  out << trace.dump(2) << '\n';
}

}  // namespace moeplan
