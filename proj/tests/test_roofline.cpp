#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "moeplan/roofline.hpp"

using namespace moeplan;

TEST_CASE("MoE large-batch cost at the A30 operating point") {
  ModelSpec m = testfix::mixtral();
  CostVector c = moe_cost_large_batch(m, 824);
  CHECK(c.gpu_ops == doctest::Approx(5.8066e11).epsilon(1e-3));
  CHECK(c.h2d_bytes == doctest::Approx(2.8186e9).epsilon(1e-3));
  CHECK(c.gpu_mem_bytes == c.h2d_bytes);
  CHECK(c.cpu_ops == 0);
  CHECK(c.cpu_mem_bytes == 0);
}

TEST_CASE("MoE large-batch edge cases") {
  ModelSpec m = testfix::mixtral();
  CHECK_THROWS_AS(moe_cost_large_batch(m, 0), std::invalid_argument);
  CHECK(moe_cost_large_batch(m, 1).gpu_ops == doctest::Approx(7.0464e8).epsilon(1e-3));

  ModelSpec all = m;
  all.n_activate = all.n_expert;
  all.bytes_per_elem = 1;
  CostVector c = moe_cost_large_batch(all, 1);
  CHECK(c.gpu_mem_bytes == doctest::Approx(3.0 * double(all.n_expert) * all.expert_size()));
  CHECK(c.h2d_bytes == c.gpu_mem_bytes);
}

TEST_CASE("MoE batch-1 cost") {
  ModelSpec m = testfix::mixtral();
  SUBCASE("r_miss=1 gives no cache benefit") {
    CostVector c = moe_cost_batch1(m, 1.0);
    CHECK(c.h2d_bytes == c.gpu_mem_bytes);
  }
  SUBCASE("r_miss=0.2 at Mixtral size") {
    CostVector c = moe_cost_batch1(m, 0.2);
    CHECK(c.h2d_bytes == doctest::Approx(1.4093e8).epsilon(1e-3));
  }
  SUBCASE("hand arithmetic") {
    ModelSpec tiny;
    tiny.h = 10;
    tiny.h_i = 10;  // e = 100
    tiny.n_expert = 4;
    tiny.n_activate = 1;
    tiny.bytes_per_elem = 2;
    CHECK(moe_cost_batch1(tiny, 0.5).h2d_bytes == doctest::Approx(300.0));
  }
  SUBCASE("r_miss out of range") {
    CHECK_THROWS_AS(moe_cost_batch1(m, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(moe_cost_batch1(m, 1.5), std::invalid_argument);
  }
}

TEST_CASE("CPU attention cost") {
  SUBCASE("hand arithmetic") {
    ModelSpec m;
    m.h = 4;
    m.g = 1;
    m.bytes_per_elem = 2;
    CostVector c = attention_cost_cpu(m, 1, 1, 1);
    CHECK(c.cpu_mem_bytes == doctest::Approx(32.0));
    CHECK(c.gpu_ops == 0);
    CHECK(c.h2d_bytes == 0);
  }
  SUBCASE("k=1 matches the single-token row up to the s+1 boundary term") {
    ModelSpec m = testfix::mixtral();
    const std::int64_t b = 10, s = 500;
    CostVector c = attention_cost_cpu(m, b, s, 1);
    // MAC view (halve the FLOP factor) vs 2*b*s*h.
    const double table = 2.0 * double(b) * double(s) * double(m.h);
    CHECK(c.cpu_ops / 2.0 == doctest::Approx(table).epsilon(0.002));
    const double table_mem =
        2.0 * double(b) * double(s) * double(m.h / m.g) * double(m.bytes_per_elem);
    CHECK(c.cpu_mem_bytes == doctest::Approx(table_mem).epsilon(0.002));
  }
  SUBCASE("ops linear in k for s >> k") {
    ModelSpec m = testfix::mixtral();
    CostVector c1 = attention_cost_cpu(m, 4, 1000000, 1);
    CostVector c2 = attention_cost_cpu(m, 4, 1000000, 2);
    CHECK(c2.cpu_ops / c1.cpu_ops == doctest::Approx(2.0).epsilon(1e-5));
  }
}

TEST_CASE("GPU-transfer attention cost") {
  SUBCASE("column swap against CPU variant") {
    ModelSpec m = testfix::mixtral();
    CostVector gpu = attention_cost_gpu_transfer(m, 8, 100);
    CHECK(gpu.cpu_ops == 0);
    CHECK(gpu.cpu_mem_bytes == 0);
    CHECK(gpu.gpu_ops > 0);
    CHECK(gpu.h2d_bytes == gpu.gpu_mem_bytes);
  }
  SUBCASE("hand arithmetic") {
    ModelSpec m;
    m.h = 4;
    m.g = 2;
    m.bytes_per_elem = 2;
    CHECK(attention_cost_gpu_transfer(m, 2, 3).h2d_bytes == doctest::Approx(48.0));
  }
  SUBCASE("g=1 leaves KV unreduced") {
    ModelSpec m = testfix::mixtral();
    m.g = 1;
    CostVector c = attention_cost_gpu_transfer(m, 2, 3);
    CHECK(c.h2d_bytes ==
          doctest::Approx(2.0 * 2 * 3 * double(m.h) * double(m.bytes_per_elem)));
    CHECK(c.gpu_mem_bytes == c.h2d_bytes);
  }
}

TEST_CASE("classify reproduces the published MoE utilization") {
  RooflinePoint p =
      classify(moe_cost_large_batch(testfix::mixtral(), 824), testfix::a30());
  CHECK(p.bound == Resource::H2D);
  CHECK(p.utilization > 0.0307);
  CHECK(p.utilization < 0.0317);
}

TEST_CASE("classify edge cases") {
  HardwareSpec hw = testfix::a30();
  SUBCASE("cpu-only cost binds on CPU compute") {
    CostVector c;
    c.cpu_ops = 1e12;
    RooflinePoint p = classify(c, hw);
    CHECK(p.bound == Resource::CPU_COMPUTE);
    CHECK(p.utilization == doctest::Approx(1.0));
  }
  SUBCASE("CPU attention is KV-memory bound on the A30") {
    RooflinePoint p =
        classify(attention_cost_cpu(testfix::mixtral(), 824, 1590, 1), hw);
    CHECK(p.bound == Resource::CPU_MEM);
  }
  SUBCASE("all-zero cost is rejected") {
    CHECK_THROWS_AS(classify(CostVector{}, hw), std::invalid_argument);
  }
  SUBCASE("achieved never exceeds the computing device's peak") {
    CostVector c = moe_cost_large_batch(testfix::mixtral(), 824);
    RooflinePoint p = classify(c, hw);
    CHECK(p.achieved <= hw.p_gpu);
    CHECK(p.utilization <= 1.0);
  }
}

TEST_CASE("crossover batch threshold") {
  ModelSpec m = testfix::mixtral();
  CHECK(crossover_batch(m, 0.2) == 20);

  ModelSpec deg = m;
  deg.n_activate = deg.n_expert;
  CHECK(crossover_batch(deg, 1.0) == 1);
}

TEST_CASE("crossover rule agrees with per-token transfer comparison") {
  ModelSpec m = testfix::mixtral();
  for (int j = 1; j <= 10; ++j) {
    const double r_miss = double(j) / 10.0;
    const std::int64_t threshold = crossover_batch(m, r_miss);
    for (std::int64_t b = 1; b <= 100; ++b) {
      // Exact integer form of: large-batch h2d per token <= batch-1 h2d
      // per token, with r_miss = j/10.
      const bool large_better = b * m.n_activate * j >= m.n_expert * 10;
      CHECK(large_better == (b >= threshold));
    }
  }
}

TEST_CASE("placement rule: CPU attention beats transfer when b_cpu > b_h2d") {
  ModelSpec m = testfix::mixtral();
  for (const HardwareSpec& hw : {testfix::a30(), testfix::rtx4090d()}) {
    REQUIRE(hw.b_cpu > hw.b_h2d);
    for (std::int64_t b : {1, 16, 824}) {
      for (std::int64_t s : {10, 566, 1590}) {
        const CostVector cpu = attention_cost_cpu(m, b, s, 1);
        const CostVector gpu = attention_cost_gpu_transfer(m, b, s);
        const double t_cpu =
            std::max(cpu.cpu_ops / hw.p_cpu, cpu.cpu_mem_bytes / hw.b_cpu);
        const double t_gpu = std::max({gpu.gpu_ops / hw.p_gpu,
                                       gpu.gpu_mem_bytes / hw.b_gpu,
                                       gpu.h2d_bytes / hw.b_h2d});
        CHECK(t_cpu <= t_gpu);
      }
    }
  }
}

TEST_CASE("cost vectors scale linearly in b") {
  ModelSpec m = testfix::mixtral();
  std::mt19937 rng(7);
  std::uniform_int_distribution<std::int64_t> bd(1, 500);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t b = bd(rng);
    CHECK(moe_cost_large_batch(m, 2 * b).gpu_ops ==
          doctest::Approx(2.0 * moe_cost_large_batch(m, b).gpu_ops));
    CHECK(attention_cost_cpu(m, 2 * b, 100, 3).cpu_ops ==
          doctest::Approx(2.0 * attention_cost_cpu(m, b, 100, 3).cpu_ops));
    CHECK(attention_cost_gpu_transfer(m, 2 * b, 100).h2d_bytes ==
          doctest::Approx(2.0 * attention_cost_gpu_transfer(m, b, 100).h2d_bytes));
  }
}

TEST_CASE("emit_roofline structure") {
  HardwareSpec hw = testfix::a30();
  ModelSpec m = testfix::mixtral();

  SUBCASE("two points plus five roof rows") {
    std::vector<RooflinePoint> pts = {
        classify(moe_cost_large_batch(m, 824), hw, "moe"),
        classify(attention_cost_cpu(m, 824, 1590, 1), hw, "attn")};
    std::ostringstream out;
    emit_roofline(pts, hw, out);
    int lines = 0;
    for (char ch : out.str())
      if (ch == '\n') ++lines;
    CHECK(lines == 1 + 2 + 5);
    CHECK(out.str().find("roof:H2D") != std::string::npos);
  }
  SUBCASE("empty point list emits header only") {
    std::ostringstream out;
    emit_roofline({}, hw, out);
    CHECK(out.str().rfind("label,", 0) == 0);
    int lines = 0;
    for (char ch : out.str())
      if (ch == '\n') ++lines;
    CHECK(lines == 1);
  }
  SUBCASE("MoE point intensity is ops over transferred bytes") {
    CostVector c = moe_cost_large_batch(m, 824);
    RooflinePoint p = classify(c, hw, "moe");
    CHECK(p.intensity == doctest::Approx(c.gpu_ops / c.h2d_bytes));
  }
}
