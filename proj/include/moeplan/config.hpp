#pragma once

// Domain types shared across the planner, plus JSON config loading and
// validation. All types are immutable after construction in practice;
// nothing here holds mutable shared state.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace moeplan {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Peak rates and capacities of one GPU + CPU host pair. Compute peaks count
// a fused multiply-add as 2 FLOPs; capacities are bytes, rates bytes/s.
struct HardwareSpec {
  double p_gpu = 0;    // peak GPU compute, FLOP/s
  double b_gpu = 0;    // GPU HBM bandwidth, bytes/s
  double p_cpu = 0;    // peak CPU compute, FLOP/s
  double b_cpu = 0;    // CPU DRAM bandwidth, bytes/s
  double b_h2d = 0;    // CPU->GPU link bandwidth, bytes/s
  double gpu_mem = 0;  // HBM capacity, bytes
  double cpu_mem = 0;  // DRAM capacity, bytes
  // Fraction of DRAM held back for OS/runtime slack when sizing the batch.
  double dram_reserve_fraction = 0.02;
};

struct DraftModelSpec {
  std::int64_t n_layers = 1;
  double param_bytes = 0;         // total draft parameter footprint
  double kv_bytes_per_token = 0;  // K+V bytes per token across all draft layers
  double ffn_ops_per_token = 0;   // FLOPs of the draft FFN per token
};

struct ModelSpec {
  std::int64_t h = 0;         // hidden dimension
  std::int64_t h_i = 0;       // expert intermediate size
  std::int64_t n_expert = 0;  // experts per MoE layer
  std::int64_t n_activate = 0;
  std::int64_t n_layers = 0;
  std::int64_t g = 1;         // KV reduction factor (e.g. GQA group size)
  std::int64_t bytes_per_elem = 2;
  // Total target-model weight footprint. 0 means "derive from dimensions"
  // (expert weights only; real checkpoints add a few GB of non-expert weights,
  // so example configs set this explicitly).
  double param_bytes = 0;
  DraftModelSpec draft;

  double expert_size() const { return double(h) * double(h_i); }
  double weight_bytes() const {
    if (param_bytes > 0) return param_bytes;
    return 3.0 * expert_size() * double(n_expert) * double(n_layers) *
           double(bytes_per_elem);
  }
};

// Maps draft length k to expected committed tokens per iteration,
// including the bonus target token: expected_tokens[0] == 1.
struct AcceptanceCurve {
  std::vector<double> expected_tokens;  // index k in {0..k_max}

  int k_max() const { return int(expected_tokens.size()) - 1; }

  // Per-token acceptance probability p: alpha(k) = sum_{i=0..k} p^i.
  static AcceptanceCurve geometric(double p, int k_max) {
    if (p < 0.0 || p > 1.0) throw ConfigError("geometric curve needs p in [0,1]");
    if (k_max < 0) throw ConfigError("geometric curve needs k_max >= 0");
    AcceptanceCurve c;
    c.expected_tokens.resize(std::size_t(k_max) + 1);
    double acc = 0.0, pw = 1.0;
    for (int k = 0; k <= k_max; ++k) {
      acc += pw;
      pw *= p;
      c.expected_tokens[std::size_t(k)] = acc;
    }
    return c;
  }
};

struct WorkloadSpec {
  double mean_input_len = 0;  // tokens
  double std_input_len = 0;   // tokens
  std::int64_t output_len = 0;
  AcceptanceCurve acceptance;

  std::int64_t total_len() const {
    return std::llround(mean_input_len) + output_len;
  }
};

struct MemoryPolicy {
  bool draft_kv_gpu_priority = true;
  double expert_cache_bytes = 0;
  // HBM reserved for target-model activations / staging buffers.
  double activation_bytes = 1e9;
};

enum class AttentionPlacement { CPU, GPU_TRANSFER };
enum class MoeBatching { LARGE_BATCH, BATCH_ONE };

struct ExecStrategy {
  AttentionPlacement attention_placement = AttentionPlacement::CPU;
  MoeBatching moe_batching = MoeBatching::LARGE_BATCH;
};

struct Hyperparameters {
  std::int64_t b = 0;  // global batch size (requests)
  std::int64_t m = 1;  // micro-batch count per layer
  int k = 0;           // draft length (tokens per iteration)
  double expert_cache_miss_rate = 1.0;
  MemoryPolicy mem_policy;
  ExecStrategy exec_strategy;
};

// ---------------------------------------------------------------------------
// Validation. Violations are data, not errors.

inline std::vector<std::string> validate(const HardwareSpec& hw) {
  std::vector<std::string> v;
  if (!(hw.p_gpu > 0)) v.push_back("p_gpu > 0");
  if (!(hw.b_gpu > 0)) v.push_back("b_gpu > 0");
  if (!(hw.p_cpu > 0)) v.push_back("p_cpu > 0");
  if (!(hw.b_cpu > 0)) v.push_back("b_cpu > 0");
  if (!(hw.b_h2d > 0)) v.push_back("b_h2d > 0");
  if (!(hw.gpu_mem > 0)) v.push_back("gpu_mem > 0");
  if (!(hw.cpu_mem > 0)) v.push_back("cpu_mem > 0");
  if (hw.b_h2d > hw.b_gpu) v.push_back("b_h2d <= b_gpu");
  if (!(hw.dram_reserve_fraction >= 0 && hw.dram_reserve_fraction < 1))
    v.push_back("dram_reserve_fraction in [0,1)");
  return v;
}

inline std::vector<std::string> validate(const ModelSpec& m) {
  std::vector<std::string> v;
  if (!(m.h > 0)) v.push_back("h > 0");
  if (!(m.h_i > 0)) v.push_back("h_i > 0");
  if (!(m.n_expert > 0)) v.push_back("n_expert > 0");
  if (!(m.n_activate >= 1)) v.push_back("n_activate >= 1");
  if (m.n_activate > m.n_expert) v.push_back("n_activate <= n_expert");
  if (!(m.n_layers > 0)) v.push_back("n_layers > 0");
  if (!(m.g >= 1)) v.push_back("g >= 1");
  if (m.g >= 1 && m.h > 0 && m.h % m.g != 0) v.push_back("h divisible by g");
  if (!(m.bytes_per_elem > 0)) v.push_back("bytes_per_elem > 0");
  if (!(m.draft.n_layers > 0)) v.push_back("draft.n_layers > 0");
  if (!(m.draft.param_bytes > 0)) v.push_back("draft.param_bytes > 0");
  if (!(m.draft.kv_bytes_per_token > 0)) v.push_back("draft.kv_bytes_per_token > 0");
  if (!(m.draft.ffn_ops_per_token > 0)) v.push_back("draft.ffn_ops_per_token > 0");
  return v;
}

inline std::vector<std::string> validate(const AcceptanceCurve& c) {
  std::vector<std::string> v;
  if (c.expected_tokens.empty()) {
    v.push_back("acceptance curve nonempty");
    return v;
  }
  if (std::abs(c.expected_tokens[0] - 1.0) > 1e-9) v.push_back("alpha(0) = 1");
  for (std::size_t k = 1; k < c.expected_tokens.size(); ++k) {
    if (c.expected_tokens[k] + 1e-9 < c.expected_tokens[k - 1]) {
      v.push_back("alpha nondecreasing in k");
      break;
    }
  }
  for (std::size_t k = 0; k < c.expected_tokens.size(); ++k) {
    if (c.expected_tokens[k] > double(k) + 1.0 + 1e-9) {
      v.push_back("alpha(k) <= k + 1");
      break;
    }
  }
  return v;
}

inline std::vector<std::string> validate(const WorkloadSpec& w) {
  std::vector<std::string> v;
  if (!(w.mean_input_len > 0)) v.push_back("mean_input_len > 0");
  if (!(w.std_input_len >= 0)) v.push_back("std_input_len >= 0");
  if (!(w.output_len >= 1)) v.push_back("output_len >= 1");
  for (auto& s : validate(w.acceptance)) v.push_back(s);
  return v;
}

inline std::vector<std::string> validate(const Hyperparameters& p,
                                         const HardwareSpec* hw = nullptr) {
  std::vector<std::string> v;
  if (!(p.m >= 1)) v.push_back("m >= 1");
  if (!(p.k >= 0)) v.push_back("k >= 0");
  if (!(p.expert_cache_miss_rate > 0 && p.expert_cache_miss_rate <= 1.0))
    v.push_back("0 < r_miss <= 1");
  if (p.b < 0) v.push_back("b >= 0");
  if (hw && p.mem_policy.expert_cache_bytes > hw->gpu_mem)
    v.push_back("expert_cache_bytes <= gpu_mem");
  return v;
}

// One loaded config file. Sections are optional so hardware/model/workload
// can live in separate files and be merged by the caller.
struct ConfigBundle {
  std::optional<HardwareSpec> hardware;
  std::optional<ModelSpec> model;
  std::optional<WorkloadSpec> workload;
  std::optional<Hyperparameters> hyperparameters;
};

inline std::vector<std::string> validate(const ConfigBundle& c) {
  std::vector<std::string> v;
  if (c.hardware)
    for (auto& s : validate(*c.hardware)) v.push_back(s);
  if (c.model)
    for (auto& s : validate(*c.model)) v.push_back(s);
  if (c.workload)
    for (auto& s : validate(*c.workload)) v.push_back(s);
  if (c.hyperparameters)
    for (auto& s : validate(*c.hyperparameters,
                            c.hardware ? &*c.hardware : nullptr))
      v.push_back(s);
  return v;
}

// ---------------------------------------------------------------------------
// JSON serialization. Unknown fields are rejected.

namespace detail {

inline void check_keys(const json& j, const char* section,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError(std::string(section) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) { ok = true; break; }
    if (!ok)
      throw ConfigError(std::string(section) + ": unknown field '" + it.key() + "'");
  }
}

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline HardwareSpec hardware_from_json(const json& j) {
  detail::check_keys(j, "hardware",
                     {"p_gpu", "b_gpu", "p_cpu", "b_cpu", "b_h2d", "gpu_mem",
                      "cpu_mem", "dram_reserve_fraction"});
  HardwareSpec hw;
  detail::get_if_present(j, "p_gpu", hw.p_gpu);
  detail::get_if_present(j, "b_gpu", hw.b_gpu);
  detail::get_if_present(j, "p_cpu", hw.p_cpu);
  detail::get_if_present(j, "b_cpu", hw.b_cpu);
  detail::get_if_present(j, "b_h2d", hw.b_h2d);
  detail::get_if_present(j, "gpu_mem", hw.gpu_mem);
  detail::get_if_present(j, "cpu_mem", hw.cpu_mem);
  detail::get_if_present(j, "dram_reserve_fraction", hw.dram_reserve_fraction);
  return hw;
}

inline json to_json(const HardwareSpec& hw) {
  return json{{"p_gpu", hw.p_gpu},     {"b_gpu", hw.b_gpu},
              {"p_cpu", hw.p_cpu},     {"b_cpu", hw.b_cpu},
              {"b_h2d", hw.b_h2d},     {"gpu_mem", hw.gpu_mem},
              {"cpu_mem", hw.cpu_mem},
              {"dram_reserve_fraction", hw.dram_reserve_fraction}};
}

inline ModelSpec model_from_json(const json& j) {
  detail::check_keys(j, "model",
                     {"h", "h_i", "n_expert", "n_activate", "n_layers", "g",
                      "bytes_per_elem", "param_bytes", "draft"});
  ModelSpec m;
  detail::get_if_present(j, "h", m.h);
  detail::get_if_present(j, "h_i", m.h_i);
  detail::get_if_present(j, "n_expert", m.n_expert);
  detail::get_if_present(j, "n_activate", m.n_activate);
  detail::get_if_present(j, "n_layers", m.n_layers);
  detail::get_if_present(j, "g", m.g);
  detail::get_if_present(j, "bytes_per_elem", m.bytes_per_elem);
  detail::get_if_present(j, "param_bytes", m.param_bytes);
  if (j.contains("draft")) {
    const json& d = j.at("draft");
    detail::check_keys(d, "model.draft",
                       {"n_layers", "param_bytes", "kv_bytes_per_token",
                        "ffn_ops_per_token"});
    detail::get_if_present(d, "n_layers", m.draft.n_layers);
    detail::get_if_present(d, "param_bytes", m.draft.param_bytes);
    detail::get_if_present(d, "kv_bytes_per_token", m.draft.kv_bytes_per_token);
    detail::get_if_present(d, "ffn_ops_per_token", m.draft.ffn_ops_per_token);
  }
  return m;
}

inline json to_json(const ModelSpec& m) {
  return json{{"h", m.h},
              {"h_i", m.h_i},
              {"n_expert", m.n_expert},
              {"n_activate", m.n_activate},
              {"n_layers", m.n_layers},
              {"g", m.g},
              {"bytes_per_elem", m.bytes_per_elem},
              {"param_bytes", m.param_bytes},
              {"draft",
               {{"n_layers", m.draft.n_layers},
                {"param_bytes", m.draft.param_bytes},
                {"kv_bytes_per_token", m.draft.kv_bytes_per_token},
                {"ffn_ops_per_token", m.draft.ffn_ops_per_token}}}};
}

// The curve encoding must be declared: "geometric" carries a per-token
// acceptance probability, "table" carries aggregate expected tokens.
inline AcceptanceCurve acceptance_from_json(const json& j) {
  detail::check_keys(j, "workload.acceptance",
                     {"kind", "p", "k_max", "expected_tokens"});
  if (!j.contains("kind"))
    throw ConfigError("workload.acceptance: missing 'kind' (geometric|table)");
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "geometric") {
    if (!j.contains("p") || !j.contains("k_max"))
      throw ConfigError("workload.acceptance: geometric needs 'p' and 'k_max'");
    return AcceptanceCurve::geometric(j.at("p").get<double>(),
                                      j.at("k_max").get<int>());
  }
  if (kind == "table") {
    if (!j.contains("expected_tokens"))
      throw ConfigError("workload.acceptance: table needs 'expected_tokens'");
    AcceptanceCurve c;
    c.expected_tokens = j.at("expected_tokens").get<std::vector<double>>();
    return c;
  }
  throw ConfigError("workload.acceptance: kind must be geometric or table");
}

inline WorkloadSpec workload_from_json(const json& j) {
  detail::check_keys(j, "workload",
                     {"mean_input_len", "std_input_len", "output_len",
                      "acceptance"});
  WorkloadSpec w;
  detail::get_if_present(j, "mean_input_len", w.mean_input_len);
  detail::get_if_present(j, "std_input_len", w.std_input_len);
  detail::get_if_present(j, "output_len", w.output_len);
  if (j.contains("acceptance")) w.acceptance = acceptance_from_json(j.at("acceptance"));
  return w;
}

inline json to_json(const WorkloadSpec& w) {
  return json{{"mean_input_len", w.mean_input_len},
              {"std_input_len", w.std_input_len},
              {"output_len", w.output_len},
              {"acceptance",
               {{"kind", "table"},
                {"expected_tokens", w.acceptance.expected_tokens}}}};
}

inline AttentionPlacement attention_placement_from_string(const std::string& s) {
  if (s == "CPU") return AttentionPlacement::CPU;
  if (s == "GPU_TRANSFER") return AttentionPlacement::GPU_TRANSFER;
  throw ConfigError("attention_placement must be CPU or GPU_TRANSFER");
}

inline MoeBatching moe_batching_from_string(const std::string& s) {
  if (s == "LARGE_BATCH") return MoeBatching::LARGE_BATCH;
  if (s == "BATCH_ONE") return MoeBatching::BATCH_ONE;
  throw ConfigError("moe_batching must be LARGE_BATCH or BATCH_ONE");
}

inline const char* to_string(AttentionPlacement p) {
  return p == AttentionPlacement::CPU ? "CPU" : "GPU_TRANSFER";
}

inline const char* to_string(MoeBatching b) {
  return b == MoeBatching::LARGE_BATCH ? "LARGE_BATCH" : "BATCH_ONE";
}

inline Hyperparameters hyperparameters_from_json(const json& j) {
  detail::check_keys(j, "hyperparameters",
                     {"b", "m", "k", "expert_cache_miss_rate", "mem_policy",
                      "exec_strategy"});
  Hyperparameters p;
  detail::get_if_present(j, "b", p.b);
  detail::get_if_present(j, "m", p.m);
  detail::get_if_present(j, "k", p.k);
  detail::get_if_present(j, "expert_cache_miss_rate", p.expert_cache_miss_rate);
  if (j.contains("mem_policy")) {
    const json& mp = j.at("mem_policy");
    detail::check_keys(mp, "hyperparameters.mem_policy",
                       {"draft_kv_gpu_priority", "expert_cache_bytes",
                        "activation_bytes"});
    detail::get_if_present(mp, "draft_kv_gpu_priority",
                           p.mem_policy.draft_kv_gpu_priority);
    detail::get_if_present(mp, "expert_cache_bytes",
                           p.mem_policy.expert_cache_bytes);
    detail::get_if_present(mp, "activation_bytes",
                           p.mem_policy.activation_bytes);
  }
  if (j.contains("exec_strategy")) {
    const json& es = j.at("exec_strategy");
    detail::check_keys(es, "hyperparameters.exec_strategy",
                       {"attention_placement", "moe_batching"});
    if (es.contains("attention_placement"))
      p.exec_strategy.attention_placement = attention_placement_from_string(
          es.at("attention_placement").get<std::string>());
    if (es.contains("moe_batching"))
      p.exec_strategy.moe_batching =
          moe_batching_from_string(es.at("moe_batching").get<std::string>());
  }
  // m must divide b; enforce by rounding b down.
  if (p.b > 0 && p.m >= 1) p.b -= p.b % p.m;
  return p;
}

inline json to_json(const Hyperparameters& p) {
  return json{{"b", p.b},
              {"m", p.m},
              {"k", p.k},
              {"expert_cache_miss_rate", p.expert_cache_miss_rate},
              {"mem_policy",
               {{"draft_kv_gpu_priority", p.mem_policy.draft_kv_gpu_priority},
                {"expert_cache_bytes", p.mem_policy.expert_cache_bytes},
                {"activation_bytes", p.mem_policy.activation_bytes}}},
              {"exec_strategy",
               {{"attention_placement",
                 to_string(p.exec_strategy.attention_placement)},
                {"moe_batching", to_string(p.exec_strategy.moe_batching)}}}};
}

inline ConfigBundle config_from_json(const json& j) {
  detail::check_keys(j, "config",
                     {"hardware", "model", "workload", "hyperparameters"});
  ConfigBundle c;
  if (j.contains("hardware")) c.hardware = hardware_from_json(j.at("hardware"));
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  if (j.contains("workload")) c.workload = workload_from_json(j.at("workload"));
  if (j.contains("hyperparameters"))
    c.hyperparameters = hyperparameters_from_json(j.at("hyperparameters"));
  return c;
}

inline json to_json(const ConfigBundle& c) {
  json j = json::object();
  if (c.hardware) j["hardware"] = to_json(*c.hardware);
  if (c.model) j["model"] = to_json(*c.model);
  if (c.workload) j["workload"] = to_json(*c.workload);
  if (c.hyperparameters) j["hyperparameters"] = to_json(*c.hyperparameters);
  return j;
}

// Loads one config file and validates whatever sections it contains.
// Throws ConfigError naming the violated invariant on failure.
inline ConfigBundle load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  ConfigBundle c = config_from_json(j);
  auto violations = validate(c);
  if (!violations.empty()) {
    std::string msg = "invalid config " + path + ":";
    for (auto& v : violations) msg += " [" + v + "]";
    throw ConfigError(msg);
  }
  return c;
}

// Merges later bundles over earlier ones, section-wise.
inline ConfigBundle merge(const ConfigBundle& base, const ConfigBundle& over) {
  ConfigBundle c = base;
  if (over.hardware) c.hardware = over.hardware;
  if (over.model) c.model = over.model;
  if (over.workload) c.workload = over.workload;
  if (over.hyperparameters) c.hyperparameters = over.hyperparameters;
  return c;
}

inline ConfigBundle load_configs(const std::vector<std::string>& paths) {
  ConfigBundle c;
  for (const auto& p : paths) c = merge(c, load_config(p));
  return c;
}

}  // namespace moeplan
