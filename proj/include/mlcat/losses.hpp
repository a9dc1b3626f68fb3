#pragma once

// Multi-label training objectives with class-imbalance weights, and the two
// prediction rules.
//
// EBCE: label-wise binary cross-entropy, each term weighted by w[j][y_ij]
//       with w[j][v] = n / (2 |{i : y_ij = v}|).
// NCE:  softmax cross-entropy over the positive labels of each row,
//       normalized by the row's positive count and weighted by
//       w_c[j] = n / sum_i (y_ij / |y_i+|).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mlcat/label_matrix.hpp"
#include "mlcat/ops.hpp"

namespace mlcat {

inline constexpr double kProbEpsilon = 1e-7;

struct EbceWeights {
  std::size_t labels = 0;
  std::vector<double> w;  // [L x 2], w[j*2 + v]

  double operator()(std::size_t j, std::size_t v) const { return w[j * 2 + v]; }
};

struct NceWeights {
  std::vector<double> w;  // [L]
};

inline EbceWeights ebce_weights(const LabelMatrix& y) {
  if (y.rows == 0) throw Error(ErrorKind::empty_input, "ebce_weights: no rows");
  const double n = static_cast<double>(y.rows);
  EbceWeights out{y.labels, std::vector<double>(y.labels * 2)};
  for (std::size_t j = 0; j < y.labels; ++j) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < y.rows; ++i) pos += y(i, j);
    const std::size_t count[2] = {y.rows - pos, pos};
    for (std::size_t v = 0; v < 2; ++v) {
      if (count[v] == 0) {
        warn("ebce_weights: label " + std::to_string(j) + " has no rows with value " +
             std::to_string(v) + "; weight clamped to n/2");
        out.w[j * 2 + v] = n / 2.0;
      } else {
        out.w[j * 2 + v] = n / (2.0 * static_cast<double>(count[v]));
      }
    }
  }
  return out;
}

inline NceWeights nce_weights(const LabelMatrix& y) {
  if (y.rows == 0) throw Error(ErrorKind::empty_input, "nce_weights: no rows");
  const double n = static_cast<double>(y.rows);
  std::vector<double> denom(y.labels, 0.0);
  for (std::size_t i = 0; i < y.rows; ++i) {
    const std::size_t k = y.positives(i);
    if (k == 0)
      throw Error(ErrorKind::invalid_target,
                  "nce_weights: row " + std::to_string(i) + " has no positive label");
    for (std::size_t j = 0; j < y.labels; ++j)
      if (y(i, j)) denom[j] += 1.0 / static_cast<double>(k);
  }
  NceWeights out{std::vector<double>(y.labels)};
  for (std::size_t j = 0; j < y.labels; ++j) {
    if (denom[j] == 0.0) {
      warn("nce_weights: label " + std::to_string(j) + " never positive; weight set to n");
      out.w[j] = n;
    } else {
      out.w[j] = n / denom[j];
    }
  }
  return out;
}

namespace detail {
template <class T>
void check_probs_shape(const Tensor<T>& probs, const LabelMatrix& y, const char* op) {
  if (probs.rank() != 2 || probs.dim(0) != y.rows || probs.dim(1) != y.labels)
    throw Error(ErrorKind::dimension, std::string(op) + ": probs " + shape_str(probs.shape()) +
                                          " vs labels [" + std::to_string(y.rows) + "x" +
                                          std::to_string(y.labels) + "]");
}
}  // namespace detail

template <class T>
Tensor<T> ebce_loss(const Tensor<T>& probs, const LabelMatrix& y, const EbceWeights& w) {
  detail::check_probs_shape(probs, y, "ebce_loss");
  if (w.labels != y.labels) throw Error(ErrorKind::dimension, "ebce_loss: weight count mismatch");
  const std::size_t n = y.rows, L = y.labels;
  std::vector<T> pos(n * L), neg(n * L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const auto v = y(i, j);
      const T wt = static_cast<T>(w(j, v));
      pos[i * L + j] = v ? wt : T(0);
      neg[i * L + j] = v ? T(0) : wt;
    }
  const T eps = static_cast<T>(kProbEpsilon);
  Tensor<T> p = clamp(probs, eps, T(1) - eps);
  Tensor<T> terms = add(mul(Tensor<T>({n, L}, std::move(pos)), log(p)),
                        mul(Tensor<T>({n, L}, std::move(neg)),
                            log(add_scalar(scale(p, T(-1)), T(1)))));
  return scale(sum(terms), T(-1) / static_cast<T>(n * L));
}

template <class T>
Tensor<T> nce_loss(const Tensor<T>& probs, const LabelMatrix& y, const NceWeights& w) {
  detail::check_probs_shape(probs, y, "nce_loss");
  if (w.w.size() != y.labels) throw Error(ErrorKind::dimension, "nce_loss: weight count mismatch");
  const std::size_t n = y.rows, L = y.labels;
  std::vector<T> coef(n * L, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = y.positives(i);
    if (k == 0)
      throw Error(ErrorKind::invalid_target,
                  "nce_loss: row " + std::to_string(i) + " has no positive label");
    for (std::size_t j = 0; j < L; ++j)
      if (y(i, j)) coef[i * L + j] = static_cast<T>(w.w[j] / static_cast<double>(k));
  }
  Tensor<T> p = clamp(probs, static_cast<T>(kProbEpsilon), T(1));
  return scale(sum(mul(Tensor<T>({n, L}, std::move(coef)), log(p))), T(-1) / static_cast<T>(n));
}

// Standard cross-entropy against one class id per row (label powerset).
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<std::size_t>& target) {
  if (probs.rank() != 2 || probs.dim(0) != target.size())
    throw Error(ErrorKind::dimension, "cross_entropy: probs " + shape_str(probs.shape()) +
                                          " vs " + std::to_string(target.size()) + " targets");
  const std::size_t n = probs.dim(0), K = probs.dim(1);
  std::vector<T> onehot(n * K, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (target[i] >= K) throw Error(ErrorKind::invalid_target, "cross_entropy: class out of range");
    onehot[i * K + target[i]] = T(1);
  }
  Tensor<T> p = clamp(probs, static_cast<T>(kProbEpsilon), T(1));
  return scale(sum(mul(Tensor<T>({n, K}, std::move(onehot)), log(p))), T(-1) / static_cast<T>(n));
}

// Labels with probability >= 0.5.
template <class R>
LabelSet predict_sigmoid(const R& probs) {
  LabelSet out;
  std::size_t j = 0;
  for (auto p : probs) {
    if (p >= 0.5) out.insert(j);
    ++j;
  }
  return out;
}

// Gaps closer than this are treated as equal.
inline constexpr double kGapTieTolerance = 1e-9;

// Sort descending (stable, so equal scores keep the smaller index first),
// take successive differences and cut after the largest gap. Ties between
// gaps go to the earliest cut.
template <class R>
LabelSet predict_maxgap(const R& probs) {
  std::vector<double> p(std::begin(probs), std::end(probs));
  if (p.empty()) return {};
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] > p[b]; });
  std::vector<double> gaps;
  for (std::size_t i = 0; i + 1 < order.size(); ++i)
    gaps.push_back(p[order[i]] - p[order[i + 1]]);
  std::size_t m = 1;
  if (!gaps.empty()) {
    const double best = *std::max_element(gaps.begin(), gaps.end());
    while (gaps[m - 1] < best - kGapTieTolerance) ++m;
  }
  return LabelSet(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
}

}  // namespace mlcat
