#pragma once

// Hyperparameter optimization: analytic pre-decisions, least-squares
// latency-model fitting from profiles, the DAG-estimator-driven k-sweep,
// and the brute-force enumeration oracle used to test it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "moeplan/config.hpp"
#include "moeplan/memory.hpp"
#include "moeplan/pipeline.hpp"
#include "moeplan/roofline.hpp"
#include "moeplan/specdec.hpp"

namespace moeplan {

struct ProfileSample {
  EventKind kind;
  double driving = 0;  // value of the kind's driving variable
  double seconds = 0;
};

// Least-squares affine fit per operator kind. Needs at least two distinct
// driving values per kind; negative fitted slopes are clamped to zero and
// reported through `warnings`.
inline LatencyModel fit_latency_models(const std::vector<ProfileSample>& samples,
                                       std::vector<std::string>* warnings = nullptr) {
  std::map<EventKind, std::vector<std::pair<double, double>>> by_kind;
  for (const auto& s : samples) by_kind[s.kind].emplace_back(s.driving, s.seconds);

  LatencyModel lm;
  for (auto& [kind, pts] : by_kind) {
    double min_x = pts.front().first, max_x = pts.front().first;
    for (auto& [x, y] : pts) {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
    }
    if (pts.size() < 2 || min_x == max_x)
      throw std::invalid_argument(std::string("fit_latency_models: need >= 2 "
                                              "distinct driving values for ") +
                                  to_string(kind));
    const double n = double(pts.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto& [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    AffineLatency a;
    a.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    a.intercept = (sy - a.slope * sx) / n;
    if (a.slope < 0) {
      if (warnings)
        warnings->push_back(std::string("negative slope clamped to 0 for ") +
                            to_string(kind));
      a.slope = 0;
      a.intercept = sy / n;
    }
    if (a.intercept < 0) a.intercept = 0;
    lm[kind] = a;
  }
  return lm;
}

struct Predecision {
  std::int64_t b = 0;
  MemoryPolicy mem_policy;
  ExecStrategy exec_strategy;
};

// Closed-form greedy rules: batch size maxed against DRAM, attention placed
// on the CPU whenever DRAM bandwidth beats the transfer link, MoE batching
// picked by the crossover threshold, draft KV given HBM priority.
inline Predecision predecide(const HardwareSpec& hw, const ModelSpec& model,
                             const WorkloadSpec& workload,
                             const Hyperparameters& base) {
  Predecision p;
  p.b = max_global_batch(hw, model, workload);
  p.mem_policy = base.mem_policy;
  p.mem_policy.draft_kv_gpu_priority = true;
  p.exec_strategy.attention_placement = hw.b_cpu > hw.b_h2d
                                            ? AttentionPlacement::CPU
                                            : AttentionPlacement::GPU_TRANSFER;
  p.exec_strategy.moe_batching =
      p.b >= crossover_batch(model, base.expert_cache_miss_rate)
          ? MoeBatching::LARGE_BATCH
          : MoeBatching::BATCH_ONE;
  return p;
}

struct Estimate {
  double iteration = 0;   // seconds
  double throughput = 0;  // tokens/s
  IterationBreakdown breakdown;
};

inline Estimate estimate(const HardwareSpec& hw, const ModelSpec& model,
                         const WorkloadSpec& workload,
                         const Hyperparameters& hyper, const MemoryPlan& plan,
                         const LatencyModel* lm = nullptr,
                         std::int64_t prefix_len = 0) {
  const IterationResult res =
      iteration_time(hw, model, workload, hyper, plan, lm, prefix_len);
  const double committed = expected_tokens(workload.acceptance, hyper.k);
  Estimate e;
  e.breakdown = res.breakdown;
  e.iteration = res.breakdown.iteration;
  e.throughput = throughput(hyper.b, committed, e.iteration);
  return e;
}

struct Plan {
  std::int64_t b = 0;
  std::int64_t m = 0;
  int k = 0;
  MemoryPlan memory;
  Hyperparameters hyper;
  double expected_throughput = 0;
  double expected_iteration = 0;
  IterationBreakdown breakdown;
};

inline const std::vector<std::int64_t>& default_m_sweep() {
  static const std::vector<std::int64_t> set = {1, 2, 4};
  return set;
}

// Sweeps k in {0..k_max} x m over the sweep set after predeciding the rest;
// ties broken toward smaller k, then smaller m (k is the outer loop, so
// a strict comparison realizes the tie-break).
inline Plan optimize(const HardwareSpec& hw, const ModelSpec& model,
                     const WorkloadSpec& workload, const LatencyModel* lm,
                     int k_max, const Hyperparameters& base = {},
                     std::int64_t prefix_len = 0,
                     const std::vector<std::int64_t>& m_sweep = default_m_sweep()) {
  if (k_max < 1) throw std::invalid_argument("optimize: k_max >= 1");
  const Predecision pd = predecide(hw, model, workload, base);
  const int k_hi = std::min(k_max, workload.acceptance.k_max());

  Plan best;
  bool have_best = false;
  for (int k = 0; k <= k_hi; ++k) {
    for (std::int64_t m : m_sweep) {
      Hyperparameters hp = base;
      hp.b = pd.b - pd.b % m;  // m must divide b
      if (hp.b < 1) continue;
      hp.m = m;
      hp.k = k;
      hp.mem_policy = pd.mem_policy;
      hp.exec_strategy = pd.exec_strategy;
      const MemoryPlan plan = plan_memory(hw, model, workload, hp.b, hp.mem_policy);
      const Estimate e = estimate(hw, model, workload, hp, plan, lm, prefix_len);
      if (!have_best || e.throughput > best.expected_throughput) {
        best.b = hp.b;
        best.m = m;
        best.k = k;
        best.memory = plan;
        best.hyper = hp;
        best.expected_throughput = e.throughput;
        best.expected_iteration = e.iteration;
        best.breakdown = e.breakdown;
        have_best = true;
      }
    }
  }
  if (!have_best) throw CapacityError("optimize: no feasible plan");
  return best;
}

// Exhaustive enumeration over the identical grid with identical estimate
// calls and tie-breaking; exists to cross-check optimize, never as a
// fallback.
inline Plan brute_force_oracle(const HardwareSpec& hw, const ModelSpec& model,
                               const WorkloadSpec& workload,
                               const LatencyModel* lm, int k_max,
                               const Hyperparameters& base = {},
                               std::int64_t prefix_len = 0,
                               const std::vector<std::int64_t>& m_sweep =
                                   default_m_sweep()) {
  if (k_max < 1) throw std::invalid_argument("brute_force_oracle: k_max >= 1");
  const Predecision pd = predecide(hw, model, workload, base);
  const int k_hi = std::min(k_max, workload.acceptance.k_max());

  struct Cell {
    int k;
    std::int64_t m;
    Plan plan;
  };
  std::vector<Cell> cells;
  for (std::int64_t m : m_sweep) {
    for (int k = 0; k <= k_hi; ++k) {
      Hyperparameters hp = base;
      hp.b = pd.b - pd.b % m;
      if (hp.b < 1) continue;
      hp.m = m;
      hp.k = k;
      hp.mem_policy = pd.mem_policy;
      hp.exec_strategy = pd.exec_strategy;
      const MemoryPlan plan = plan_memory(hw, model, workload, hp.b, hp.mem_policy);
      const Estimate e = estimate(hw, model, workload, hp, plan, lm, prefix_len);
      Cell c;
      c.k = k;
      c.m = m;
      c.plan.b = hp.b;
      c.plan.m = m;
      c.plan.k = k;
      c.plan.memory = plan;
      c.plan.hyper = hp;
      c.plan.expected_throughput = e.throughput;
      c.plan.expected_iteration = e.iteration;
      c.plan.breakdown = e.breakdown;
      cells.push_back(std::move(c));
    }
  }
  if (cells.empty()) throw CapacityError("brute_force_oracle: no feasible plan");
  const Cell* best = &cells.front();
  for (const auto& c : cells) {
    if (c.plan.expected_throughput > best->plan.expected_throughput ||
        (c.plan.expected_throughput == best->plan.expected_throughput &&
         (c.k < best->k || (c.k == best->k && c.m < best->m))))
      best = &c;
  }
  return best->plan;
}

}  // namespace moeplan
