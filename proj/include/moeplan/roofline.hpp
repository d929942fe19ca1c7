#pragma once

// Per-layer operator cost formulas, arithmetic-intensity classification
// against the five hardware resources, the two large-batch/placement
// decision rules, and CSV emission of roofline points.
//
// CostVector fields are FLOPs and bytes per single model layer per decode
// iteration. Matrix-multiply costs are counted as multiply-accumulates and
// doubled at construction, so classification against the FLOP/s peaks is
// consistent.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "moeplan/config.hpp"

namespace moeplan {

enum class Resource { GPU_COMPUTE, GPU_MEM, H2D, CPU_COMPUTE, CPU_MEM };

inline const char* to_string(Resource r) {
  switch (r) {
    case Resource::GPU_COMPUTE: return "GPU_COMPUTE";
    case Resource::GPU_MEM: return "GPU_MEM";
    case Resource::H2D: return "H2D";
    case Resource::CPU_COMPUTE: return "CPU_COMPUTE";
    case Resource::CPU_MEM: return "CPU_MEM";
  }
  return "?";
}

struct CostVector {
  double gpu_ops = 0;        // FLOPs
  double gpu_mem_bytes = 0;  // HBM bytes
  double h2d_bytes = 0;      // CPU->GPU bytes
  double cpu_ops = 0;        // FLOPs
  double cpu_mem_bytes = 0;  // DRAM bytes
};

struct RooflinePoint {
  std::string label;
  double intensity = 0;  // FLOPs per byte on the binding memory resource
  double achieved = 0;   // FLOP/s
  Resource bound = Resource::GPU_COMPUTE;
  double utilization = 0;  // fraction of the computing device's peak
};

// MoE layer, large-batch regime: all experts assumed activated, weights
// streamed over the link once per layer.
inline CostVector moe_cost_large_batch(const ModelSpec& m, std::int64_t b) {
  if (b < 1) throw std::invalid_argument("moe_cost_large_batch: b >= 1");
  const double e = m.expert_size();
  CostVector c;
  c.gpu_ops = 2.0 * 3.0 * e * double(m.n_activate) * double(b);
  c.gpu_mem_bytes = 3.0 * double(m.n_expert) * e * double(m.bytes_per_elem);
  c.h2d_bytes = c.gpu_mem_bytes;
  return c;
}

// MoE layer, batch-1 regime: only activated experts touched; expert caching
// scales the transfer by the miss rate.
inline CostVector moe_cost_batch1(const ModelSpec& m, double r_miss) {
  if (!(r_miss > 0 && r_miss <= 1.0))
    throw std::invalid_argument("moe_cost_batch1: 0 < r_miss <= 1");
  const double e = m.expert_size();
  CostVector c;
  c.gpu_ops = 2.0 * 3.0 * e * double(m.n_activate);
  c.gpu_mem_bytes = 3.0 * double(m.n_activate) * e * double(m.bytes_per_elem);
  c.h2d_bytes = c.gpu_mem_bytes * r_miss;
  return c;
}

// CPU attention over k draft query rows against a prefix of s tokens.
// The KV cache is read once per iteration regardless of k, which is the
// amortization that makes drafting attractive on the CPU side.
inline CostVector attention_cost_cpu(const ModelSpec& m, std::int64_t b,
                                     std::int64_t s, std::int64_t k) {
  if (s < 1) throw std::invalid_argument("attention_cost_cpu: s >= 1");
  if (k < 1) throw std::invalid_argument("attention_cost_cpu: k >= 1");
  CostVector c;
  c.cpu_ops = 2.0 * 2.0 * double(b) * double(s + k) * double(m.h) * double(k);
  c.cpu_mem_bytes = 2.0 * double(b) * double(s + k) * double(m.h / m.g) *
                    double(m.bytes_per_elem);
  return c;
}

// Attention with KV transferred to the GPU instead.
inline CostVector attention_cost_gpu_transfer(const ModelSpec& m,
                                              std::int64_t b, std::int64_t s) {
  if (s < 1) throw std::invalid_argument("attention_cost_gpu_transfer: s >= 1");
  CostVector c;
  c.gpu_ops = 2.0 * 2.0 * double(b) * double(s) * double(m.h);
  c.gpu_mem_bytes =
      2.0 * double(b) * double(s) * double(m.h / m.g) * double(m.bytes_per_elem);
  c.h2d_bytes = c.gpu_mem_bytes;
  return c;
}

// Per-resource time = demand / rate; the binding resource is the argmax,
// ties broken by the fixed order GPU_COMPUTE < GPU_MEM < H2D < CPU_COMPUTE
// < CPU_MEM.
inline RooflinePoint classify(const CostVector& c, const HardwareSpec& hw,
                              const std::string& label = "") {
  const std::array<double, 5> times = {
      c.gpu_ops / hw.p_gpu, c.gpu_mem_bytes / hw.b_gpu, c.h2d_bytes / hw.b_h2d,
      c.cpu_ops / hw.p_cpu, c.cpu_mem_bytes / hw.b_cpu};
  double max_time = 0;
  int bound = 0;
  for (int i = 0; i < 5; ++i) {
    if (times[std::size_t(i)] > max_time) {
      max_time = times[std::size_t(i)];
      bound = i;
    }
  }
  if (max_time <= 0) throw std::invalid_argument("classify: all-zero cost");

  const bool on_gpu = c.gpu_ops >= c.cpu_ops;
  const double ops = on_gpu ? c.gpu_ops : c.cpu_ops;
  const double peak = on_gpu ? hw.p_gpu : hw.p_cpu;

  RooflinePoint p;
  p.label = label;
  p.bound = Resource(bound);
  p.achieved = ops / max_time;
  p.utilization = p.achieved / peak;

  // Intensity is relative to the binding bandwidth resource; for a
  // compute-bound point, relative to the slowest memory resource of the
  // computing device.
  double bytes = 0;
  switch (p.bound) {
    case Resource::GPU_MEM: bytes = c.gpu_mem_bytes; break;
    case Resource::H2D: bytes = c.h2d_bytes; break;
    case Resource::CPU_MEM: bytes = c.cpu_mem_bytes; break;
    case Resource::GPU_COMPUTE:
      bytes = (c.gpu_mem_bytes / hw.b_gpu >= c.h2d_bytes / hw.b_h2d)
                  ? c.gpu_mem_bytes
                  : c.h2d_bytes;
      break;
    case Resource::CPU_COMPUTE: bytes = c.cpu_mem_bytes; break;
  }
  p.intensity =
      bytes > 0 ? ops / bytes : std::numeric_limits<double>::infinity();
  return p;
}

// Threshold batch size above which the large-batch MoE regime transfers
// fewer bytes per token than the cached batch-1 regime.
inline std::int64_t crossover_batch(const ModelSpec& m, double r_miss) {
  if (!(r_miss > 0 && r_miss <= 1.0))
    throw std::invalid_argument("crossover_batch: 0 < r_miss <= 1");
  const double x = double(m.n_expert) / (double(m.n_activate) * r_miss);
  // Small epsilon keeps exact thresholds like 10.000000000000002 from
  // rounding up.
  return std::int64_t(std::ceil(x - 1e-9));
}

// CSV: one row per point plus one roof row per peak/bandwidth pair.
// Compute roofs carry the peak at intensity 0 (horizontal line); bandwidth
// roofs carry the achievable FLOP/s at intensity 1 (line through the
// origin with slope = bandwidth).
inline void emit_roofline(const std::vector<RooflinePoint>& points,
                          const HardwareSpec& hw, std::ostream& out) {
  out << "label,intensity_flops_per_byte,achieved_flops,bound,utilization\n";
  if (points.empty()) return;
  for (const auto& p : points) {
    out << p.label << ',' << p.intensity << ',' << p.achieved << ','
        << to_string(p.bound) << ',' << p.utilization << '\n';
  }
  out << "roof:GPU_COMPUTE,0," << hw.p_gpu << ",,\n";
  out << "roof:GPU_MEM,1," << hw.b_gpu << ",,\n";
  out << "roof:H2D,1," << hw.b_h2d << ",,\n";
  out << "roof:CPU_COMPUTE,0," << hw.p_cpu << ",,\n";
  out << "roof:CPU_MEM,1," << hw.b_cpu << ",,\n";
}

}  // namespace moeplan
