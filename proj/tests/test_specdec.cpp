#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "moeplan/specdec.hpp"

using namespace moeplan;

TEST_CASE("expected_tokens closed forms") {
  SUBCASE("p=0 accepts nothing beyond the bonus token") {
    AcceptanceCurve c = AcceptanceCurve::geometric(0.0, 8);
    for (int k = 0; k <= 8; ++k)
      CHECK(expected_tokens(c, k) == doctest::Approx(1.0));
  }
  SUBCASE("p=1 accepts everything") {
    AcceptanceCurve c = AcceptanceCurve::geometric(1.0, 8);
    CHECK(expected_tokens(c, 4) == doctest::Approx(5.0));
  }
  SUBCASE("p=0.8 geometric sum") {
    AcceptanceCurve c = AcceptanceCurve::geometric(0.8, 10);
    CHECK(expected_tokens(c, 4) == doctest::Approx(3.3616));
    CHECK(expected_tokens(c, 0) == doctest::Approx(1.0));
  }
  SUBCASE("k outside the curve domain") {
    AcceptanceCurve c = AcceptanceCurve::geometric(0.5, 3);
    CHECK_THROWS_AS(expected_tokens(c, 4), std::invalid_argument);
    CHECK_THROWS_AS(expected_tokens(c, -1), std::invalid_argument);
  }
}

TEST_CASE("simulate_tokens degenerate probabilities") {
  std::vector<double> ones(6, 1.0), zeros(6, 0.0);
  TokenSimResult all = simulate_tokens(ones, 5, 1000, 1);
  CHECK(all.mean_committed == doctest::Approx(6.0));
  CHECK(all.std_committed == doctest::Approx(0.0));

  TokenSimResult none = simulate_tokens(zeros, 5, 1000, 1);
  CHECK(none.mean_committed == doctest::Approx(1.0));
  CHECK(none.std_committed == doctest::Approx(0.0));
}

TEST_CASE("simulate_tokens argument checks") {
  std::vector<double> p(3, 0.5);
  CHECK_THROWS_AS(simulate_tokens(p, 4, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(simulate_tokens(p, 2, 0, 1), std::invalid_argument);
}

TEST_CASE("simulate_tokens is deterministic per seed") {
  std::vector<double> p(5, 0.7);
  TokenSimResult a = simulate_tokens(p, 5, 10000, 42);
  TokenSimResult b = simulate_tokens(p, 5, 10000, 42);
  CHECK(a.mean_committed == b.mean_committed);
  CHECK(a.std_committed == b.std_committed);
}

TEST_CASE("Monte Carlo agrees with the geometric closed form") {
  const std::int64_t trials = 100000;
  for (double p : {0.1, 0.5, 0.8, 0.9}) {
    AcceptanceCurve curve = AcceptanceCurve::geometric(p, 10);
    std::vector<double> probs(10, p);
    for (int k : {1, 4, 10}) {
      const double exact = expected_tokens(curve, k);
      TokenSimResult mc = simulate_tokens(probs, k, trials,
                                          std::uint64_t(k) * 1000 + 7);
      CHECK(std::abs(mc.mean_committed - exact) / exact < 0.02);
      // Also within 3 standard errors.
      const double se = mc.std_committed / std::sqrt(double(trials));
      CHECK(std::abs(mc.mean_committed - exact) <= 3.0 * se + 1e-9);
    }
  }
}

TEST_CASE("throughput arithmetic") {
  CHECK(throughput(100, 3.0, 2.0) == doctest::Approx(150.0));
  CHECK(throughput(824, 1.0, 5.0) == doctest::Approx(824.0 / 5.0));
  CHECK_THROWS_AS(throughput(1, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("draft-length controller") {
  SUBCASE("fixed point: static state returns the sweep's answer") {
    DraftLengthController ctl([](std::int64_t, std::int64_t) { return 5; });
    CHECK(ctl.update(600, 100) == 5);
    CHECK(ctl.update(600, 100) == 5);
  }
  SUBCASE("k nonincreasing as prefix grows at fixed batch") {
    // A sweep whose raw answer wobbles; the controller must still emit a
    // monotone series.
    DraftLengthController ctl([](std::int64_t prefix, std::int64_t) {
      return prefix < 900 ? 6 : (prefix < 1200 ? 3 : 4);
    });
    int prev = 1 << 20;
    for (std::int64_t prefix = 600; prefix <= 1590; prefix += 90) {
      const int k = ctl.update(prefix, 100);
      CHECK(k <= prev);
      prev = k;
    }
  }
  SUBCASE("k may rise when requests finish") {
    DraftLengthController ctl([](std::int64_t, std::int64_t active) {
      return active > 50 ? 2 : 6;
    });
    CHECK(ctl.update(1000, 100) == 2);
    CHECK(ctl.update(1100, 40) == 6);
  }
}
