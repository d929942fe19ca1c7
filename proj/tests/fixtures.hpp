#pragma once

// Shared hardware/model/workload fixtures for the test suites.

#include "moeplan/config.hpp"

namespace moeplan::testfix {

inline HardwareSpec a30() {
  HardwareSpec hw;
  hw.p_gpu = 165e12;
  hw.b_gpu = 933e9;
  hw.b_h2d = 25e9;
  hw.p_cpu = 2.43e12;
  hw.b_cpu = 357e9;
  hw.gpu_mem = 24e9;
  hw.cpu_mem = 250e9;
  return hw;
}

inline HardwareSpec rtx4090d() {
  HardwareSpec hw;
  hw.p_gpu = 83e12;
  hw.b_gpu = 1008e9;
  hw.b_h2d = 23e9;
  hw.p_cpu = 1.45e12;
  hw.b_cpu = 197e9;
  hw.gpu_mem = 24e9;
  hw.cpu_mem = 190e9;
  return hw;
}

inline ModelSpec mixtral() {
  ModelSpec m;
  m.h = 4096;
  m.h_i = 14336;
  m.n_expert = 8;
  m.n_activate = 2;
  m.n_layers = 32;
  m.g = 4;
  m.bytes_per_elem = 2;
  m.param_bytes = 87e9;
  m.draft.n_layers = 1;
  m.draft.param_bytes = 1.63e9;
  m.draft.kv_bytes_per_token = 16384;
  m.draft.ffn_ops_per_token = 3.52e8;
  return m;
}

inline WorkloadSpec apps(double p = 0.8, int k_max = 10) {
  WorkloadSpec w;
  w.mean_input_len = 566.17;
  w.std_input_len = 271.80;
  w.output_len = 1024;
  w.acceptance = AcceptanceCurve::geometric(p, k_max);
  return w;
}

inline MemoryPolicy section52_policy() {
  MemoryPolicy p;
  p.draft_kv_gpu_priority = true;
  p.expert_cache_bytes = 5.25e9;
  p.activation_bytes = 1e9;
  return p;
}

// Synthetic environment where CPU attention time grows with k fast enough
// for the throughput-vs-k curve to peak at an interior draft length.
inline HardwareSpec sweep_hw() {
  HardwareSpec hw;
  hw.p_gpu = 100e12;
  hw.b_gpu = 1e12;
  hw.b_h2d = 271e9;
  hw.p_cpu = 1e12;
  hw.b_cpu = 400e9;
  hw.gpu_mem = 24e9;
  hw.cpu_mem = 132e9;
  return hw;
}

}  // namespace moeplan::testfix
