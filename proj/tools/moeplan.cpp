// Planning/simulation CLI: roofline analysis, memory-aware plan generation,
// iteration simulation with trace output, draft-length sweeps, and the
// chunked-attention verifier.

#include <CLI11.hpp>

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "moeplan/attention.hpp"
#include "moeplan/config.hpp"
#include "moeplan/memory.hpp"
#include "moeplan/optimizer.hpp"
#include "moeplan/pipeline.hpp"
#include "moeplan/report.hpp"
#include "moeplan/roofline.hpp"
#include "moeplan/specdec.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitAnalysis = 1;
constexpr int kExitUsage = 2;

std::string timestamp() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot open output file: " + path);
  return file;
}

void require(const moeplan::ConfigBundle& cfg, bool hardware, bool model,
             bool workload) {
  if (hardware && !cfg.hardware)
    throw moeplan::ConfigError("missing config section: hardware");
  if (model && !cfg.model)
    throw moeplan::ConfigError("missing config section: model");
  if (workload && !cfg.workload)
    throw moeplan::ConfigError("missing config section: workload");
}

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

int cmd_roofline(const moeplan::ConfigBundle& cfg, const std::string& out_path,
                 const std::string& format) {
  using namespace moeplan;
  require(cfg, true, true, false);
  const HardwareSpec& hw = *cfg.hardware;
  const ModelSpec& model = *cfg.model;
  Hyperparameters hyper =
      cfg.hyperparameters ? *cfg.hyperparameters : Hyperparameters{};

  std::int64_t b = hyper.b;
  if (b < 1) {
    if (!cfg.workload)
      throw ConfigError("roofline needs hyperparameters.b or a workload "
                        "section to derive the batch size");
    b = max_global_batch(hw, model, *cfg.workload);
  }

  std::vector<RooflinePoint> points;
  points.push_back(classify(moe_cost_large_batch(model, b), hw,
                            "MoE(large batch)"));
  const double r_miss = hyper.expert_cache_miss_rate;
  points.push_back(classify(moe_cost_batch1(model, r_miss), hw, "MoE(batch=1)"));
  if (cfg.workload) {
    const std::int64_t s = cfg.workload->total_len();
    const std::int64_t k_eff = std::max(hyper.k, 1);
    points.push_back(
        classify(attention_cost_cpu(model, b, s, k_eff), hw, "Attention(CPU)"));
    points.push_back(classify(attention_cost_gpu_transfer(model, b, s), hw,
                              "Attention(GPU transfer)"));
  }

  for (const auto& p : points)
    std::cout << p.label << ": bound=" << to_string(p.bound)
              << " util=" << pct(p.utilization) << '\n';

  std::ofstream file;
  std::ostream& out = open_out(file, out_path);
  if (format == "json") {
    json arr = json::array();
    for (const auto& p : points) arr.push_back(to_json(p));
    out << json{{"version", kVersion}, {"b", b}, {"points", arr}}.dump(2)
        << '\n';
  } else {
    emit_roofline(points, hw, out);
  }
  return kExitOk;
}

int cmd_plan(const moeplan::ConfigBundle& cfg, const std::string& out_path,
             int k_max) {
  using namespace moeplan;
  require(cfg, true, true, true);
  const Hyperparameters base =
      cfg.hyperparameters ? *cfg.hyperparameters : Hyperparameters{};

  std::cout << "capacity assumptions: decimal bytes (1 GB = 1e9), "
            << cfg.hardware->dram_reserve_fraction * 100.0
            << "% of DRAM reserved for OS/runtime, per-request KV sized at "
            << "mean_input_len + output_len = " << cfg.workload->total_len()
            << " tokens\n";

  Plan plan = optimize(*cfg.hardware, *cfg.model, *cfg.workload, nullptr,
                       k_max, base);
  std::cout << "plan: b=" << plan.b << " m=" << plan.m << " k=" << plan.k
            << " iteration=" << plan.expected_iteration
            << "s throughput=" << plan.expected_throughput << " tok/s\n";

  std::ofstream file;
  std::ostream& out = open_out(file, out_path);
  out << json{{"version", kVersion},
              {"timestamp", timestamp()},
              {"inputs", to_json(cfg)},
              {"plan", to_json(plan)}}
             .dump(2)
      << '\n';
  return kExitOk;
}

int cmd_simulate(const moeplan::ConfigBundle& cfg, const std::string& out_path,
                 const std::string& trace_path, int k_override,
                 std::int64_t m_override) {
  using namespace moeplan;
  require(cfg, true, true, true);
  Hyperparameters hyper =
      cfg.hyperparameters ? *cfg.hyperparameters : Hyperparameters{};
  if (k_override >= 0) hyper.k = k_override;
  if (m_override >= 1) hyper.m = m_override;
  if (hyper.b < 1) {
    const Predecision pd =
        predecide(*cfg.hardware, *cfg.model, *cfg.workload, hyper);
    hyper.b = pd.b - pd.b % std::max<std::int64_t>(1, hyper.m);
    hyper.exec_strategy = pd.exec_strategy;
    hyper.mem_policy = pd.mem_policy;
  }

  const MemoryPlan plan = plan_memory(*cfg.hardware, *cfg.model, *cfg.workload,
                                      hyper.b, hyper.mem_policy);
  const IterationResult res =
      iteration_time(*cfg.hardware, *cfg.model, *cfg.workload, hyper, plan);

  std::ofstream file;
  std::ostream& out = open_out(file, out_path);
  out << json{{"version", kVersion},
              {"timestamp", timestamp()},
              {"b", hyper.b},
              {"m", hyper.m},
              {"k", hyper.k},
              {"memory_plan", to_json(plan)},
              {"breakdown", to_json(res.breakdown)}}
             .dump(2)
      << '\n';

  if (!trace_path.empty()) {
    // One timeline: draft phase first, target phase shifted behind it.
    const double shift = res.draft_schedule.makespan;
    json events = json::array();
    auto push = [&](const EventDag& dag, const Schedule& sched, double offset) {
      for (const auto& ev : dag)
        events.push_back(json{
            {"name", ev.label.empty() ? to_string(ev.kind) : ev.label},
            {"cat", to_string(ev.kind)},
            {"ph", "X"},
            {"ts", (sched.start[std::size_t(ev.id)] + offset) * 1e6},
            {"dur", ev.duration * 1e6},
            {"pid", 0},
            {"tid", int(ev.resource)},
        });
    };
    push(res.draft_dag, res.draft_schedule, 0.0);
    push(res.target_dag, res.target_schedule, shift);
    for (int r = 0; r < 3; ++r)
      events.push_back(json{{"name", "thread_name"},
                            {"ph", "M"},
                            {"pid", 0},
                            {"tid", r},
                            {"args", {{"name", to_string(ExecResource(r))}}}});
    std::ofstream tf(trace_path);
    if (!tf) throw std::runtime_error("cannot open trace file: " + trace_path);
    tf << json{{"traceEvents", events}, {"displayTimeUnit", "ms"}}.dump(2)
       << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const moeplan::ConfigBundle& cfg, const std::string& out_path,
              int k_max, std::int64_t m_override) {
  using namespace moeplan;
  require(cfg, true, true, true);
  const Hyperparameters base =
      cfg.hyperparameters ? *cfg.hyperparameters : Hyperparameters{};
  const Predecision pd =
      predecide(*cfg.hardware, *cfg.model, *cfg.workload, base);
  const std::int64_t m =
      m_override >= 1 ? m_override : std::max<std::int64_t>(1, base.m);
  const int k_hi = std::min(k_max, cfg.workload->acceptance.k_max());

  std::ofstream file;
  std::ostream& out = open_out(file, out_path);
  out << "k,iteration_s,committed_tokens,throughput_tokens_per_s\n";
  for (int k = 0; k <= k_hi; ++k) {
    Hyperparameters hp = base;
    hp.b = pd.b - pd.b % m;
    hp.m = m;
    hp.k = k;
    hp.mem_policy = pd.mem_policy;
    hp.exec_strategy = pd.exec_strategy;
    const MemoryPlan plan = plan_memory(*cfg.hardware, *cfg.model,
                                        *cfg.workload, hp.b, hp.mem_policy);
    const Estimate e = estimate(*cfg.hardware, *cfg.model, *cfg.workload, hp,
                                plan);
    out << k << ',' << e.iteration << ','
        << expected_tokens(cfg.workload->acceptance, k) << ',' << e.throughput
        << '\n';
  }
  return kExitOk;
}

moeplan::Matrix matrix_from_json(const moeplan::json& j, std::size_t rows,
                                 std::size_t cols, const char* name) {
  moeplan::Matrix m(rows, cols);
  if (j.size() != rows)
    throw moeplan::ConfigError(std::string(name) + ": wrong row count");
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols)
      throw moeplan::ConfigError(std::string(name) + ": wrong column count");
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = j[r][c].get<double>();
  }
  return m;
}

int cmd_verify_attention(const std::string& fixture_path,
                         const std::vector<std::uint64_t>& random_args) {
  using namespace moeplan;
  struct Case {
    AttentionInstance inst;
    CompactMask mask;
  };
  std::vector<Case> cases;

  if (!fixture_path.empty()) {
    std::ifstream in(fixture_path);
    if (!in) throw ConfigError("cannot open fixture: " + fixture_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed fixture: ") + e.what());
    }
    Case c;
    c.inst.n = j.at("n").get<std::size_t>();
    c.inst.prefix_len = j.at("prefix_len").get<std::size_t>();
    c.inst.d = j.at("d").get<std::size_t>();
    const std::size_t total = c.inst.prefix_len + c.inst.n;
    c.inst.Q = matrix_from_json(j.at("Q"), c.inst.n, c.inst.d, "Q");
    c.inst.K = matrix_from_json(j.at("K"), total, c.inst.d, "K");
    c.inst.V = matrix_from_json(j.at("V"), total, c.inst.d, "V");
    c.mask = CompactMask(c.inst.n);
    const json& mj = j.at("mask");
    if (mj.size() != c.inst.n) throw ConfigError("mask: wrong row count");
    for (std::size_t r = 0; r < c.inst.n; ++r)
      for (std::size_t col = 0; col < c.inst.n; ++col)
        c.mask.set(r, col, mj[r][col].get<bool>());
    cases.push_back(std::move(c));
  } else {
    const std::uint64_t seed = random_args[0];
    const std::uint64_t count = random_args[1];
    detail::TrialRng rng(detail::splitmix64(seed));
    auto draw = [&] { return 2.0 * rng.uniform() - 1.0; };
    for (std::uint64_t i = 0; i < count; ++i) {
      Case c;
      c.inst.n = 1 + std::size_t(rng.uniform() * 8);
      c.inst.prefix_len = std::size_t(rng.uniform() * 65);
      c.inst.d = 1 + std::size_t(rng.uniform() * 32);
      const std::size_t total = c.inst.prefix_len + c.inst.n;
      c.inst.Q = Matrix(c.inst.n, c.inst.d);
      c.inst.K = Matrix(total, c.inst.d);
      c.inst.V = Matrix(total, c.inst.d);
      for (double& x : c.inst.Q.data) x = draw();
      for (double& x : c.inst.K.data) x = draw();
      for (double& x : c.inst.V.data) x = draw();
      c.mask = CompactMask(c.inst.n);
      for (std::size_t r = 0; r < c.inst.n; ++r) {
        c.mask.set(r, r, true);
        for (std::size_t col = 0; col < c.inst.n; ++col)
          if (col != r && rng.uniform() < 0.6) c.mask.set(r, col, true);
      }
      cases.push_back(std::move(c));
    }
  }

  std::size_t passed = 0;
  double worst = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    const Matrix a = chunked_attention(c.inst, c.mask);
    const Matrix b = naive_oracle(c.inst, expand(c.mask, c.inst.prefix_len));
    double err = 0;
    for (std::size_t t = 0; t < a.data.size(); ++t) {
      const double denom = std::max(1e-12, std::abs(b.data[t]));
      err = std::max(err, std::abs(a.data[t] - b.data[t]) / denom);
    }
    worst = std::max(worst, err);
    const bool ok = err < 1e-6;
    if (ok) ++passed;
    if (!ok)
      std::cout << "case " << i << ": FAIL (max relative error " << err
                << ")\n";
  }
  std::cout << passed << "/" << cases.size()
            << " pass, worst relative error " << worst << '\n';
  return passed == cases.size() ? kExitOk : kExitAnalysis;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analytical planner and simulator for offloaded MoE decoding "
               "with speculative drafting"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::vector<std::string> config_paths;
  std::string out_path;
  std::string format = "csv";
  std::string trace_path;
  std::string fixture_path;
  std::vector<std::uint64_t> random_args;
  int k_flag = -1;
  std::int64_t m_flag = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_paths,
                                "Config file(s); later files override "
                                "earlier ones section by section");
    if (needs_config) opt->required();
    sub->add_option("--out", out_path, "Write the report here instead of stdout");
  };

  CLI::App* roofline = app.add_subcommand(
      "roofline", "Classify operator cost points against the hardware roofs");
  add_common(roofline, true);
  roofline->add_option("--format", format, "Report format")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI::App* plan = app.add_subcommand(
      "plan", "Generate the throughput-optimal execution plan");
  add_common(plan, true);
  plan->add_option("--k", k_flag, "Largest draft length to sweep");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Simulate one decode iteration and report the breakdown");
  add_common(simulate, true);
  simulate->add_option("--k", k_flag, "Draft length override");
  simulate->add_option("--m", m_flag, "Micro-batch count override");
  simulate->add_option("--trace", trace_path, "Write a trace-JSON timeline here");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Tabulate iteration time and throughput over draft lengths");
  add_common(sweep, true);
  sweep->add_option("--k", k_flag, "Largest draft length to sweep");
  sweep->add_option("--m", m_flag, "Micro-batch count");

  CLI::App* verify = app.add_subcommand(
      "verify-attention",
      "Check the chunked attention operator against the full-mask oracle");
  verify->add_option("fixture", fixture_path, "JSON fixture with Q/K/V/mask");
  verify->add_option("--random", random_args, "Seed and case count")
      ->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (verify->parsed()) {
      if (fixture_path.empty() && random_args.size() != 2) {
        std::cerr << "verify-attention needs a fixture path or --random "
                     "<seed> <count>\n";
        return kExitUsage;
      }
      return cmd_verify_attention(fixture_path, random_args);
    }

    const moeplan::ConfigBundle cfg = moeplan::load_configs(config_paths);
    if (roofline->parsed()) return cmd_roofline(cfg, out_path, format);
    if (plan->parsed())
      return cmd_plan(cfg, out_path, k_flag >= 1 ? k_flag : 10);
    if (simulate->parsed())
      return cmd_simulate(cfg, out_path, trace_path, k_flag, m_flag);
    if (sweep->parsed())
      return cmd_sweep(cfg, out_path, k_flag >= 1 ? k_flag : 10, m_flag);
  } catch (const moeplan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAnalysis;
  }
  return kExitUsage;
}
