#pragma once

// JSON report pieces shared by the CLI subcommands.

#include <string>

#include "moeplan/memory.hpp"
#include "moeplan/optimizer.hpp"
#include "moeplan/pipeline.hpp"

namespace moeplan {

inline json to_json(const MemoryPlan& p) {
  return json{{"b_max", p.b_max},
              {"target_kv_cpu_bytes", p.target_kv_cpu_bytes},
              {"draft_kv_total_bytes", p.draft_kv_total_bytes},
              {"draft_kv_gpu_bytes", p.draft_kv_gpu_bytes},
              {"draft_kv_cpu_bytes", p.draft_kv_cpu_bytes},
              {"expert_cache_bytes", p.expert_cache_bytes},
              {"draft_param_bytes", p.draft_param_bytes},
              {"activation_bytes", p.activation_bytes},
              {"gpu_split_requests", p.gpu_split_requests}};
}

// Row labels follow the published breakdown vocabulary so reports compare
// mechanically.
inline json to_json(const IterationBreakdown& b) {
  return json{{"Target model", b.target_total},
              {"CPU Attention", b.cpu_attention},
              {"GPU MoE", b.gpu_moe},
              {"HtoD Transfer", b.h2d_transfer},
              {"Draft model", b.draft_total},
              {"GPU Part", b.draft_gpu_part},
              {"CPU Part", b.draft_cpu_part},
              {"Others", b.others},
              {"Iteration", b.iteration}};
}

inline json to_json(const Plan& p) {
  return json{{"b", p.b},
              {"m", p.m},
              {"k", p.k},
              {"memory_plan", to_json(p.memory)},
              {"hyperparameters", to_json(p.hyper)},
              {"expected_throughput_tokens_per_s", p.expected_throughput},
              {"expected_iteration_s", p.expected_iteration},
              {"breakdown", to_json(p.breakdown)}};
}

inline json to_json(const RooflinePoint& p) {
  return json{{"label", p.label},
              {"intensity_flops_per_byte", p.intensity},
              {"achieved_flops", p.achieved},
              {"bound", to_string(p.bound)},
              {"utilization", p.utilization}};
}

}  // namespace moeplan
