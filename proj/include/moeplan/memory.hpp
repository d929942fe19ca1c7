#pragma once

// Memory footprints and capacity-driven decisions: DRAM-limited global
// batch size, HBM allocation, and the GPU/CPU split of the draft KV cache
// with its dynamic ratio.

#include <cmath>
#include <stdexcept>
#include <string>

#include "moeplan/config.hpp"

namespace moeplan {

class CapacityError : public std::runtime_error {
public:
  explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MemoryPlan {
  std::int64_t b_max = 0;
  double target_kv_cpu_bytes = 0;
  double draft_kv_total_bytes = 0;
  double draft_kv_gpu_bytes = 0;
  double draft_kv_cpu_bytes = 0;
  double expert_cache_bytes = 0;
  double draft_param_bytes = 0;
  double activation_bytes = 0;
  std::int64_t gpu_split_requests = 0;  // requests whose draft KV lives on GPU
};

// Target-model K+V bytes for one request at the given sequence length.
inline double kv_bytes_per_request(const ModelSpec& m, std::int64_t total_len) {
  if (total_len < 1) throw std::invalid_argument("kv_bytes_per_request: total_len >= 1");
  return 2.0 * double(m.n_layers) * double(total_len) * double(m.h / m.g) *
         double(m.bytes_per_elem);
}

// Largest global batch whose target KV cache fits in DRAM next to the
// target weights, after the configured OS/runtime reservation. Sizing uses
// the worst case mean_input_len + output_len per request.
inline std::int64_t max_global_batch(const HardwareSpec& hw, const ModelSpec& m,
                                     const WorkloadSpec& w) {
  const double reserved = hw.cpu_mem * hw.dram_reserve_fraction;
  const double weights = m.weight_bytes();
  const double avail = hw.cpu_mem - weights - reserved;
  const double per_req = kv_bytes_per_request(m, w.total_len());
  if (avail < per_req)
    throw CapacityError("max_global_batch: DRAM has no capacity for even one request");
  return std::int64_t(std::floor(avail / per_req));
}

// HBM allocation in fixed priority order: draft params, activations, expert
// cache, then draft KV; whatever draft KV does not fit spills to DRAM.
inline MemoryPlan plan_memory(const HardwareSpec& hw, const ModelSpec& m,
                              const WorkloadSpec& w, std::int64_t b,
                              const MemoryPolicy& policy) {
  if (b < 1) throw std::invalid_argument("plan_memory: b >= 1");
  MemoryPlan plan;
  plan.b_max = b;
  plan.draft_param_bytes = m.draft.param_bytes;
  plan.activation_bytes = policy.activation_bytes;
  plan.expert_cache_bytes = policy.expert_cache_bytes;

  const double fixed = plan.draft_param_bytes + plan.activation_bytes +
                       plan.expert_cache_bytes;
  if (fixed > hw.gpu_mem)
    throw CapacityError("plan_memory: fixed HBM allocations exceed gpu_mem");

  const std::int64_t total_len = w.total_len();
  const double per_req_draft_kv = double(total_len) * m.draft.kv_bytes_per_token;
  plan.draft_kv_total_bytes = double(b) * per_req_draft_kv;

  double hbm_left = hw.gpu_mem - fixed;
  if (policy.draft_kv_gpu_priority && per_req_draft_kv > 0) {
    std::int64_t fit = std::int64_t(std::floor(hbm_left / per_req_draft_kv));
    plan.gpu_split_requests = std::min(fit, b);
  }
  plan.draft_kv_gpu_bytes = double(plan.gpu_split_requests) * per_req_draft_kv;
  plan.draft_kv_cpu_bytes = plan.draft_kv_total_bytes - plan.draft_kv_gpu_bytes;

  plan.target_kv_cpu_bytes = double(b) * kv_bytes_per_request(m, total_len);
  const double cpu_used =
      m.weight_bytes() + plan.target_kv_cpu_bytes + plan.draft_kv_cpu_bytes;
  if (cpu_used > hw.cpu_mem)
    throw CapacityError("plan_memory: DRAM capacity exceeded (weights + KV)");
  return plan;
}

// Recomputes how many requests' draft KV fit in the HBM budget at the
// current sequence length. Nonincreasing in current_len, capped by the
// active request count.
inline std::int64_t dynamic_split_ratio(const HardwareSpec& hw,
                                        const ModelSpec& m,
                                        const MemoryPolicy& policy,
                                        std::int64_t current_len,
                                        std::int64_t active_requests) {
  if (current_len < 1) throw std::invalid_argument("dynamic_split_ratio: current_len >= 1");
  const double fixed = m.draft.param_bytes + policy.activation_bytes +
                       policy.expert_cache_bytes;
  const double budget = hw.gpu_mem - fixed;
  const double per_req = double(current_len) * m.draft.kv_bytes_per_token;
  if (budget <= 0 || per_req <= 0) return 0;
  const std::int64_t fit = std::int64_t(std::floor(budget / per_req));
  return std::min(fit, active_requests);
}

}  // namespace moeplan
