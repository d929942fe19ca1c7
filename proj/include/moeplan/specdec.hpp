#pragma once

// Speculative-decoding token economics: expected committed tokens per
// iteration, a Monte Carlo token-level oracle, throughput, and the dynamic
// draft-length controller.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "moeplan/config.hpp"

namespace moeplan {

struct TokenSimResult {
  std::int64_t trials = 0;
  double mean_committed = 0;  // tokens per iteration
  double std_committed = 0;
};

// alpha(k): expected committed tokens, including the bonus target token.
inline double expected_tokens(const AcceptanceCurve& curve, int k) {
  if (k < 0 || k > curve.k_max())
    throw std::invalid_argument("expected_tokens: k outside curve domain");
  return curve.expected_tokens[std::size_t(k)];
}

namespace detail {

// splitmix64; used to derive independent per-trial streams so parallel and
// sequential execution agree.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Iterated splitmix64 stream; fixed algorithm so draws match across
// platforms and standard libraries.
struct TrialRng {
  std::uint64_t state;
  explicit TrialRng(std::uint64_t seed) : state(seed) {}
  double uniform() {
    state = splitmix64(state);
    return double(state >> 11) * 0x1.0p-53;
  }
};

}  // namespace detail

// Sequential chain acceptance: position i is accepted iff all earlier
// positions were and an independent draw at i succeeds; committed =
// accepted + 1.
inline TokenSimResult simulate_tokens(const std::vector<double>& per_position_accept,
                                      int k, std::int64_t trials,
                                      std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("simulate_tokens: trials >= 1");
  if (k < 0 || std::size_t(k) > per_position_accept.size())
    throw std::invalid_argument("simulate_tokens: probabilities length >= k");

  double sum = 0, sumsq = 0;
  for (std::int64_t t = 0; t < trials; ++t) {
    detail::TrialRng rng(detail::splitmix64(seed ^ std::uint64_t(t)));
    int accepted = 0;
    for (int i = 0; i < k; ++i) {
      if (rng.uniform() < per_position_accept[std::size_t(i)])
        ++accepted;
      else
        break;
    }
    const double committed = double(accepted) + 1.0;
    sum += committed;
    sumsq += committed * committed;
  }
  TokenSimResult r;
  r.trials = trials;
  r.mean_committed = sum / double(trials);
  const double var =
      std::max(0.0, sumsq / double(trials) - r.mean_committed * r.mean_committed);
  r.std_committed = std::sqrt(var);
  return r;
}

inline double throughput(std::int64_t b, double committed, double iter_time) {
  if (!(iter_time > 0)) throw std::invalid_argument("throughput: iter_time > 0");
  return double(b) * committed / iter_time;
}

// Re-runs the optimizer's k-sweep as generation state changes. The sweep
// handle maps (prefix_len, active_requests) to the argmax draft length.
// Ties in the sweep are expected to favor the previous k; on top of that,
// k is clamped to be nonincreasing while the prefix grows at a fixed
// request count, and may rise again when requests finish.
class DraftLengthController {
public:
  using SweepFn = std::function<int(std::int64_t prefix_len,
                                    std::int64_t active_requests)>;

  explicit DraftLengthController(SweepFn sweep) : sweep_(std::move(sweep)) {}

  int update(std::int64_t prefix_len, std::int64_t active_requests) {
    int k = sweep_(prefix_len, active_requests);
    if (has_state_) {
      const bool prefix_grew = prefix_len >= prev_prefix_;
      const bool same_batch = active_requests == prev_active_;
      if (same_batch && prefix_grew) k = std::min(k, prev_k_);
    }
    has_state_ = true;
    prev_k_ = k;
    prev_prefix_ = prefix_len;
    prev_active_ = active_requests;
    return k;
  }

private:
  SweepFn sweep_;
  bool has_state_ = false;
  int prev_k_ = 0;
  std::int64_t prev_prefix_ = 0;
  std::int64_t prev_active_ = 0;
};

}  // namespace moeplan
