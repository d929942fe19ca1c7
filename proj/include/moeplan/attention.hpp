#pragma once

// Desk-scale numerical reference of the chunked attention verification
// operator with compact-mask storage, plus the full-mask brute-force
// oracle it is validated against. Single head, single request, double
// precision throughout.
//
// Mask convention: true/0 = visible, false/-inf = blocked.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace moeplan {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// n draft queries attending to prefix_len previous tokens plus themselves.
struct AttentionInstance {
  std::size_t n = 0;           // draft token count
  std::size_t prefix_len = 0;  // previous-token count
  std::size_t d = 0;           // head dimension
  Matrix Q;                    // n x d
  Matrix K;                    // (prefix_len + n) x d
  Matrix V;                    // (prefix_len + n) x d
};

// Visibility over draft-draft pairs only; prefix visibility is implicit.
struct CompactMask {
  std::size_t n = 0;
  std::vector<bool> visible;  // n x n, row-major

  CompactMask() = default;
  explicit CompactMask(std::size_t n_) : n(n_), visible(n_ * n_, false) {}

  bool at(std::size_t i, std::size_t j) const { return visible[i * n + j]; }
  void set(std::size_t i, std::size_t j, bool v) { visible[i * n + j] = v; }

  // Lower-triangular visibility of sequential (chain) drafting.
  static CompactMask chain(std::size_t n) {
    CompactMask m(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    return m;
  }
};

// Full n x (prefix_len + n) mask: prefix columns visible, draft block copied.
inline std::vector<bool> expand(const CompactMask& mask, std::size_t prefix_len) {
  const std::size_t n = mask.n;
  const std::size_t cols = prefix_len + n;
  std::vector<bool> full(n * cols, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < prefix_len; ++j) full[i * cols + j] = true;
    for (std::size_t j = 0; j < n; ++j)
      full[i * cols + prefix_len + j] = mask.at(i, j);
  }
  return full;
}

inline CompactMask compact(const std::vector<bool>& full, std::size_t n,
                           std::size_t prefix_len) {
  CompactMask m(n);
  const std::size_t cols = prefix_len + n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m.set(i, j, full[i * cols + prefix_len + j]);
  return m;
}

// Full-to-compact mask entry-count ratio.
inline double mask_memory_savings(std::size_t n, std::size_t prefix_len) {
  if (n < 1) throw std::invalid_argument("mask_memory_savings: n >= 1");
  return double(prefix_len + n) / double(n);
}

namespace detail {

inline void check_shapes(const AttentionInstance& inst) {
  const std::size_t total = inst.prefix_len + inst.n;
  if (inst.Q.rows != inst.n || inst.Q.cols != inst.d ||
      inst.K.rows != total || inst.K.cols != inst.d ||
      inst.V.rows != total || inst.V.cols != inst.d)
    throw std::invalid_argument("attention: shape mismatch");
  for (double x : inst.Q.data)
    if (!std::isfinite(x)) throw std::invalid_argument("attention: non-finite Q");
  for (double x : inst.K.data)
    if (!std::isfinite(x)) throw std::invalid_argument("attention: non-finite K");
  for (double x : inst.V.data)
    if (!std::isfinite(x)) throw std::invalid_argument("attention: non-finite V");
}

inline double dot_row(const Matrix& a, std::size_t i, const Matrix& b,
                      std::size_t j) {
  double s = 0;
  for (std::size_t c = 0; c < a.cols; ++c) s += a.at(i, c) * b.at(j, c);
  return s;
}

}  // namespace detail

// Chunked operator: scores only against visible columns, the prefix region
// implicitly visible and the draft block gated by the compact mask; the
// full mask is never materialized. Softmax is stabilized by the row max.
inline Matrix chunked_attention(const AttentionInstance& inst,
                                const CompactMask& mask) {
  detail::check_shapes(inst);
  if (mask.n != inst.n) throw std::invalid_argument("attention: mask size mismatch");
  const std::size_t n = inst.n, d = inst.d, p = inst.prefix_len;
  const double scale = 1.0 / std::sqrt(double(d));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  Matrix out(n, d);
  std::vector<std::size_t> cols;
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    cols.clear();
    scores.clear();
    double row_max = neg_inf;
    for (std::size_t j = 0; j < p; ++j) {
      cols.push_back(j);
      scores.push_back(detail::dot_row(inst.Q, i, inst.K, j) * scale);
      row_max = std::max(row_max, scores.back());
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.at(i, j)) continue;
      cols.push_back(p + j);
      scores.push_back(detail::dot_row(inst.Q, i, inst.K, p + j) * scale);
      row_max = std::max(row_max, scores.back());
    }
    if (cols.empty())
      throw std::invalid_argument("attention: fully blocked query row");
    double denom = 0;
    for (double& s : scores) {
      s = std::exp(s - row_max);
      denom += s;
    }
    for (std::size_t t = 0; t < cols.size(); ++t) {
      const double w = scores[t] / denom;
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) += w * inst.V.at(cols[t], c);
    }
  }
  return out;
}

// Brute-force oracle: materializes the additive mask (0 visible, -inf
// blocked), computes the dense score matrix, then a stabilized rowwise
// softmax times V. Independent of the chunked path.
inline Matrix naive_oracle(const AttentionInstance& inst,
                           const std::vector<bool>& full_mask) {
  detail::check_shapes(inst);
  const std::size_t n = inst.n, d = inst.d;
  const std::size_t total = inst.prefix_len + n;
  if (full_mask.size() != n * total)
    throw std::invalid_argument("attention: full mask size mismatch");
  const double scale = 1.0 / std::sqrt(double(d));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  Matrix add_mask(n, total);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < total; ++j)
      add_mask.at(i, j) = full_mask[i * total + j] ? 0.0 : neg_inf;

  Matrix scores(n, total);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < total; ++j)
      scores.at(i, j) =
          detail::dot_row(inst.Q, i, inst.K, j) * scale + add_mask.at(i, j);

  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = neg_inf;
    for (std::size_t j = 0; j < total; ++j)
      row_max = std::max(row_max, scores.at(i, j));
    if (row_max == neg_inf)
      throw std::invalid_argument("attention: fully blocked query row");
    double denom = 0;
    for (std::size_t j = 0; j < total; ++j) {
      const double e =
          scores.at(i, j) == neg_inf ? 0.0 : std::exp(scores.at(i, j) - row_max);
      scores.at(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < total; ++j) {
      const double w = scores.at(i, j) / denom;
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) += w * inst.V.at(j, c);
    }
  }
  return out;
}

}  // namespace moeplan
