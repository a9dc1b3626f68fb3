#pragma once

// Differentiable operations over mlcat::Tensor.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>

#include <Eigen/Core>

#include "mlcat/tensor.hpp"

namespace mlcat {

namespace detail {

[[noreturn]] inline void dim_error(const char* op, const Shape& a,
                                   const Shape& b) {
  throw Error(ErrorKind::dimension, std::string(op) + ": incompatible shapes " +
                                        shape_str(a) + " and " + shape_str(b));
}

// Index plan for a numpy-style broadcast of two operands.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;  // per output axis, 0 = broadcast

  Broadcast(const Shape& a, const Shape& b, const char* op) {
    std::size_t r = std::max(a.size(), b.size());
    out.assign(r, 1);
    stride_a.assign(r, 0);
    stride_b.assign(r, 0);
    auto padded = [r](const Shape& s) {
      Shape p(r - s.size(), 1);
      p.insert(p.end(), s.begin(), s.end());
      return p;
    };
    Shape pa = padded(a), pb = padded(b);
    for (std::size_t i = 0; i < r; ++i) {
      if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) dim_error(op, a, b);
      out[i] = std::max(pa[i], pb[i]);
    }
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = r; i-- > 0;) {
      stride_a[i] = pa[i] == 1 ? 0 : sa;
      stride_b[i] = pb[i] == 1 ? 0 : sb;
      sa *= pa[i];
      sb *= pb[i];
    }
  }

  // Calls f(out_index, a_index, b_index) for every output element.
  template <class F>
  void for_each(F&& f) const {
    const std::size_t r = out.size();
    const std::size_t inner = out[r - 1];
    const std::size_t ia_step = stride_a[r - 1], ib_step = stride_b[r - 1];
    std::vector<std::size_t> idx(r, 0);
    std::size_t o = 0, ia = 0, ib = 0;
    const std::size_t total = numel(out);
    while (o < total) {
      std::size_t a_i = ia, b_i = ib;
      for (std::size_t j = 0; j < inner; ++j, ++o, a_i += ia_step, b_i += ib_step)
        f(o, a_i, b_i);
      // advance the outer odometer
      for (std::size_t ax = r - 1; ax-- > 0;) {
        ++idx[ax];
        ia += stride_a[ax];
        ib += stride_b[ax];
        if (idx[ax] < out[ax]) break;
        ia -= stride_a[ax] * out[ax];
        ib -= stride_b[ax] * out[ax];
        idx[ax] = 0;
      }
    }
  }
};

template <class T, class Fwd, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name,
                 Fwd fwd, DA da, DB db) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.size());
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return Tensor<T>::make_result(
        a.shape(), std::move(out), {a, b}, [da, db](Node<T>& self) {
          auto& pa = *self.parents[0];
          auto& pb = *self.parents[1];
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad)
              pa.grad[i] += self.grad[i] * da(pa.value[i], pb.value[i]);
            if (pb.requires_grad)
              pb.grad[i] += self.grad[i] * db(pa.value[i], pb.value[i]);
          }
        });
  }
  Broadcast plan(a.shape(), b.shape(), name);
  std::vector<T> out(numel(plan.out));
  auto av = a.data();
  auto bv = b.data();
  plan.for_each([&](std::size_t o, std::size_t i, std::size_t j) {
    out[o] = fwd(av[i], bv[j]);
  });
  return Tensor<T>::make_result(
      plan.out, std::move(out), {a, b}, [plan, da, db](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        plan.for_each([&](std::size_t o, std::size_t i, std::size_t j) {
          if (pa.requires_grad)
            pa.grad[i] += self.grad[o] * da(pa.value[i], pb.value[j]);
          if (pb.requires_grad)
            pb.grad[j] += self.grad[o] * db(pa.value[i], pb.value[j]);
        });
      });
}

// dfdx receives (input, output).
template <class T, class Fwd, class Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv dfdx) {
  std::vector<T> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [dfdx](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    p.grad[i] += self.grad[i] *
                                                 dfdx(p.value[i], self.value[i]);
                                });
}

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
  if (s.size() != r)
    throw Error(ErrorKind::rank, std::string(op) + ": expected rank " +
                                     std::to_string(r) + ", got " + shape_str(s));
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

// Clips into [lo, hi]; the gradient is zero outside the interval.
template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v < lo || v > hi) ? T(0) : T(1); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return Tensor<T>::make_result({1}, {s}, {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    detail::dim_error("matmul", a.shape(), b.shape());
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  Map(out.data(), m, n).noalias() = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);
  return Tensor<T>::make_result(
      {a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        CMap g(self.grad.data(), m, n);
        if (pa.requires_grad)
          Map(pa.grad.data(), m, k).noalias() += g * CMap(pb.value.data(), k, n).transpose();
        if (pb.requires_grad)
          Map(pb.grad.data(), k, n).noalias() += CMap(pa.value.data(), m, k).transpose() * g;
      });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    detail::dim_error("reshape", x.shape(), shape);
  return Tensor<T>::make_result(
      std::move(shape), std::vector<T>(x.data().begin(), x.data().end()), {x},
      [](Node<T>& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
      });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(r * c);
  auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return Tensor<T>::make_result({c, r}, std::move(out), {x},
                                [r, c](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t i = 0; i < r; ++i)
                                    for (std::size_t j = 0; j < c; ++j)
                                      p.grad[i * c + j] += self.grad[j * r + i];
                                });
}

// Concatenation along the last axis; leading dimensions must agree.
template <class T>
Tensor<T> concat_last_axis(const std::vector<Tensor<T>>& parts) {
  if (parts.empty())
    throw Error(ErrorKind::dimension, "concat_last_axis: no inputs");
  const Shape& s0 = parts[0].shape();
  Shape lead(s0.begin(), s0.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (auto& p : parts) {
    Shape l(p.shape().begin(), p.shape().end() - 1);
    if (l != lead) detail::dim_error("concat_last_axis", s0, p.shape());
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = numel(lead);
  std::vector<T> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k],
                  out.data() + r * total + off);
    off += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return Tensor<T>::make_result(
      std::move(shape), std::move(out), parts,
      [widths, rows, total](Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          auto& p = *self.parents[k];
          if (p.requires_grad)
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j)
                p.grad[r * widths[k] + j] += self.grad[r * total + off + j];
          off += widths[k];
        }
      });
}

// Concatenation along the first axis; trailing dimensions must agree.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw Error(ErrorKind::dimension, "concat_rows: no inputs");
  const Shape& s0 = parts[0].shape();
  Shape tail(s0.begin() + 1, s0.end());
  std::size_t rows = 0;
  std::vector<T> out;
  std::vector<std::size_t> sizes;
  for (auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) detail::dim_error("concat_rows", s0, p.shape());
    rows += p.shape()[0];
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.size());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), parts,
                                [sizes](Node<T>& self) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < sizes.size(); ++k) {
                                    auto& p = *self.parents[k];
                                    if (p.requires_grad)
                                      for (std::size_t i = 0; i < sizes[k]; ++i)
                                        p.grad[i] += self.grad[off + i];
                                    off += sizes[k];
                                  }
                                });
}

// Rows [begin, end) along the first axis.
template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.dim(0))
    throw Error(ErrorKind::dimension, "slice_rows: range [" +
                                          std::to_string(begin) + "," +
                                          std::to_string(end) + ") outside " +
                                          shape_str(x.shape()));
  const std::size_t row = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> out(x.data().begin() + begin * row, x.data().begin() + end * row);
  return Tensor<T>::make_result(std::move(shape), std::move(out), {x},
                                [off = begin * row](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    p.grad[off + i] += self.grad[i];
                                });
}

// Columns [begin, end) along the last axis.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t width = x.shape().back();
  if (begin >= end || end > width)
    throw Error(ErrorKind::dimension, "slice_cols: range [" +
                                          std::to_string(begin) + "," +
                                          std::to_string(end) + ") outside " +
                                          shape_str(x.shape()));
  const std::size_t rows = x.size() / width, w = end - begin;
  std::vector<T> out(rows * w);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data() + r * width + begin, w, out.data() + r * w);
  Shape shape = x.shape();
  shape.back() = w;
  return Tensor<T>::make_result(std::move(shape), std::move(out), {x},
                                [rows, w, width, begin](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t j = 0; j < w; ++j)
                                      p.grad[r * width + begin + j] +=
                                          self.grad[r * w + j];
                                });
}

// Picks rows of a [N x h] tensor; index -1 yields a zero row.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::ptrdiff_t>& index) {
  detail::require_rank(x.shape(), 2, "gather_rows");
  const std::size_t n = x.dim(0), h = x.dim(1);
  std::vector<T> out(index.size() * h, T(0));
  auto xv = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= n)
      throw Error(ErrorKind::dimension, "gather_rows: index " +
                                            std::to_string(index[i]) +
                                            " outside " + shape_str(x.shape()));
    std::copy_n(xv.data() + index[i] * h, h, out.data() + i * h);
  }
  return Tensor<T>::make_result({index.size(), h}, std::move(out), {x},
                                [index, h](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t i = 0; i < index.size(); ++i) {
                                    if (index[i] < 0) continue;
                                    for (std::size_t j = 0; j < h; ++j)
                                      p.grad[index[i] * h + j] += self.grad[i * h + j];
                                  }
                                });
}

// Row-wise select: row i comes from `a` where keep[i] != 0, else from `b`.
template <class T>
Tensor<T> blend_rows(const std::vector<std::uint8_t>& keep, const Tensor<T>& a,
                     const Tensor<T>& b) {
  if (a.shape() != b.shape() || a.dim(0) != keep.size())
    detail::dim_error("blend_rows", a.shape(), b.shape());
  const std::size_t w = a.size() / a.dim(0);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    auto src = keep[i] ? a.data() : b.data();
    std::copy_n(src.data() + i * w, w, out.data() + i * w);
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                [keep, w](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  auto& pb = *self.parents[1];
                                  for (std::size_t i = 0; i < keep.size(); ++i) {
                                    auto& dst = keep[i] ? pa : pb;
                                    if (!dst.requires_grad) continue;
                                    for (std::size_t j = 0; j < w; ++j)
                                      dst.grad[i * w + j] += self.grad[i * w + j];
                                  }
                                });
}

// Inverted dropout: survivors are scaled by 1/(1-rate) during training,
// identity at inference.
template <class T, class Rng>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw Error(ErrorKind::config, "dropout rate must be in [0,1), got " +
                                       std::to_string(rate));
  if (!train || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> factor(x.size());
  for (auto& f : factor) f = keep(rng) ? s : T(0);
  std::vector<T> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [factor = std::move(factor)](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t i = 0; i < factor.size(); ++i)
                                    p.grad[i] += self.grad[i] * factor[i];
                                });
}

// Softmax over the last axis of a [N x L] (or [L]) tensor. Masked entries
// (mask == 0) are excluded and come out exactly 0. Every row needs at least
// one live entry.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits, const Tensor<T>* mask = nullptr) {
  const std::size_t L = logits.shape().back();
  const std::size_t rows = logits.size() / L;
  if (mask && mask->shape() != logits.shape())
    detail::dim_error("softmax", logits.shape(), mask->shape());
  std::vector<T> out(logits.size(), T(0));
  auto lv = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = lv.data() + r * L;
    auto live = [&](std::size_t j) { return !mask || mask->data()[r * L + j] != T(0); };
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < L; ++j)
      if (live(j)) {
        mx = std::max(mx, row[j]);
        any = true;
      }
    if (!any)
      throw Error(ErrorKind::empty_support,
                  "softmax: row " + std::to_string(r) + " is fully masked");
    T z = 0;
    for (std::size_t j = 0; j < L; ++j)
      if (live(j)) z += (out[r * L + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < L; ++j) out[r * L + j] /= z;
  }
  return Tensor<T>::make_result(logits.shape(), std::move(out), {logits},
                                [rows, L](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t r = 0; r < rows; ++r) {
                                    const T* y = self.value.data() + r * L;
                                    const T* g = self.grad.data() + r * L;
                                    T dot = 0;
                                    for (std::size_t j = 0; j < L; ++j) dot += g[j] * y[j];
                                    for (std::size_t j = 0; j < L; ++j)
                                      p.grad[r * L + j] += y[j] * (g[j] - dot);
                                  }
                                });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& logits,
                  const std::optional<Tensor<T>>& mask = std::nullopt) {
  detail::require_rank(logits.shape(), 1, "softmax");
  return softmax_rows(logits, mask ? &*mask : nullptr);
}

// Valid sliding-window convolution along the word axis.
//   words   [N x W x D]  (or [W x D] for a single sequence)
//   filters [k x D x F]
//   mask    [N x W]      (or [W]); 1 marks a real word
// Output [N x (W-k+1) x F]. Windows touching a masked position hold -inf so
// that max pooling ignores them.
template <class T>
Tensor<T> conv1d(const Tensor<T>& words, const Tensor<T>& filters,
                 const Tensor<T>& mask) {
  const bool single = words.rank() == 2;
  if (!single && words.rank() != 3)
    throw Error(ErrorKind::rank, "conv1d: words must be rank 2 or 3, got " +
                                     shape_str(words.shape()));
  detail::require_rank(filters.shape(), 3, "conv1d");
  const std::size_t N = single ? 1 : words.dim(0);
  const std::size_t W = words.dim(single ? 0 : 1);
  const std::size_t D = words.shape().back();
  const std::size_t k = filters.dim(0), F = filters.dim(2);
  if (filters.dim(1) != D) detail::dim_error("conv1d", words.shape(), filters.shape());
  if (mask.size() != N * W) detail::dim_error("conv1d", words.shape(), mask.shape());
  if (W < k)
    throw Error(ErrorKind::degenerate_length,
                "conv1d: sequence length " + std::to_string(W) +
                    " shorter than kernel " + std::to_string(k));
  const std::size_t P = W - k + 1;
  std::vector<T> out(N * P * F, T(0));
  std::vector<std::uint8_t> valid(N * P, 1);
  auto xv = words.data();
  auto fv = filters.data();
  auto mv = mask.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t j = 0; j < k; ++j)
        if (mv[n * W + p + j] == T(0)) valid[n * P + p] = 0;
      T* o = out.data() + (n * P + p) * F;
      if (!valid[n * P + p]) {
        std::fill_n(o, F, -std::numeric_limits<T>::infinity());
        continue;
      }
      // the window is contiguous: k*D inputs against a [(k*D) x F] matrix
      const T* x = xv.data() + (n * W + p) * D;
      for (std::size_t q = 0; q < k * D; ++q) {
        const T xq = x[q];
        if (xq == T(0)) continue;
        const T* frow = fv.data() + q * F;
        for (std::size_t f = 0; f < F; ++f) o[f] += xq * frow[f];
      }
    }
  Shape shape = single ? Shape{P, F} : Shape{N, P, F};
  return Tensor<T>::make_result(
      std::move(shape), std::move(out), {words, filters},
      [N, W, D, k, F, P, valid](Node<T>& self) {
        auto& pw = *self.parents[0];
        auto& pf = *self.parents[1];
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t p = 0; p < P; ++p) {
            if (!valid[n * P + p]) continue;
            const T* g = self.grad.data() + (n * P + p) * F;
            const std::size_t xoff = (n * W + p) * D;
            for (std::size_t q = 0; q < k * D; ++q) {
              const T* frow = pf.value.data() + q * F;
              if (pw.requires_grad) {
                T acc = 0;
                for (std::size_t f = 0; f < F; ++f) acc += g[f] * frow[f];
                pw.grad[xoff + q] += acc;
              }
              if (pf.requires_grad) {
                const T xq = pw.value[xoff + q];
                T* dfrow = pf.grad.data() + q * F;
                for (std::size_t f = 0; f < F; ++f) dfrow[f] += xq * g[f];
              }
            }
          }
      });
}

// Per-filter maximum over the time axis: [T x F] -> [F] or
// [N x T x F] -> [N x F]. Ties go to the first index. A column that is -inf
// everywhere (no valid window) yields 0 and passes no gradient.
template <class T>
Tensor<T> max_over_time(const Tensor<T>& featmap) {
  const bool single = featmap.rank() == 2;
  if (!single && featmap.rank() != 3)
    throw Error(ErrorKind::rank, "max_over_time: expected rank 2 or 3, got " +
                                     shape_str(featmap.shape()));
  const std::size_t N = single ? 1 : featmap.dim(0);
  const std::size_t Tn = featmap.dim(single ? 0 : 1);
  const std::size_t F = featmap.shape().back();
  if (Tn == 0)
    throw Error(ErrorKind::degenerate_length, "max_over_time: empty time axis");
  std::vector<T> out(N * F, T(0));
  std::vector<std::ptrdiff_t> arg(N * F, -1);
  auto v = featmap.data();
  const T ninf = -std::numeric_limits<T>::infinity();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      T best = ninf;
      std::ptrdiff_t bi = -1;
      for (std::size_t t = 0; t < Tn; ++t) {
        const T x = v[(n * Tn + t) * F + f];
        if (x > best) {
          best = x;
          bi = static_cast<std::ptrdiff_t>(t);
        }
      }
      if (bi >= 0) {
        out[n * F + f] = best;
        arg[n * F + f] = bi;
      }
    }
  Shape shape = single ? Shape{F} : Shape{N, F};
  return Tensor<T>::make_result(std::move(shape), std::move(out), {featmap},
                                [N, Tn, F, arg](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t n = 0; n < N; ++n)
                                    for (std::size_t f = 0; f < F; ++f) {
                                      auto t = arg[n * F + f];
                                      if (t < 0) continue;
                                      p.grad[(n * Tn + t) * F + f] += self.grad[n * F + f];
                                    }
                                });
}

}  // namespace mlcat
