#pragma once

// Parameterized building blocks: dense projection, bidirectional LSTM,
// additive attention pooling and the 2/3/4-gram convolutional block.
//
// All layers work on batches of sequences. A batch of N sequences of up to T
// steps is laid out time-major as [T x N x D]; `lengths[n]` gives the valid
// prefix of sequence n. Padding positions never influence any output.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mlcat/ops.hpp"

namespace mlcat {

using Rng = std::mt19937_64;

template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

template <class T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                         Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

namespace detail {

inline std::vector<std::uint8_t> keep_at(const std::vector<std::size_t>& lengths,
                                         std::size_t t) {
  std::vector<std::uint8_t> keep(lengths.size());
  for (std::size_t n = 0; n < lengths.size(); ++n) keep[n] = t < lengths[n];
  return keep;
}

inline bool all_set(const std::vector<std::uint8_t>& v) {
  for (auto x : v)
    if (!x) return false;
  return true;
}

// Converts a 0/1 mask tensor over T steps into a prefix length.
template <class T>
std::size_t prefix_length(const Tensor<T>& mask) {
  std::size_t len = 0;
  auto m = mask.data();
  while (len < m.size() && m[len] != T(0)) ++len;
  for (std::size_t t = len; t < m.size(); ++t)
    if (m[t] != T(0))
      throw Error(ErrorKind::dimension, "mask is not a contiguous valid prefix");
  return len;
}

}  // namespace detail

template <class T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng)
      : weight_(glorot_uniform<T>({in, out}, in, out, rng)),
        bias_(Tensor<T>::zeros({out}, true)) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return add(matmul(x, weight_), bias_);
  }

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight_);
    out.emplace_back(prefix + ".bias", &bias_);
  }

 private:
  Tensor<T> weight_, bias_;
};

// Standard LSTM (no peepholes) run in both directions. Gate order in the
// packed weights is input, forget, cell candidate, output.
template <class T>
class BiLstmLayer {
 public:
  BiLstmLayer() = default;
  BiLstmLayer(std::size_t input_size, std::size_t hidden_size, Rng& rng)
      : input_size_(input_size), hidden_(hidden_size) {
    for (auto* d : {&fwd_, &bwd_}) {
      d->wx = glorot_uniform<T>({input_size, 4 * hidden_size}, input_size,
                                4 * hidden_size, rng);
      d->wh = glorot_uniform<T>({hidden_size, 4 * hidden_size}, hidden_size,
                                4 * hidden_size, rng);
      std::vector<T> b(4 * hidden_size, T(0));
      std::fill(b.begin() + hidden_size, b.begin() + 2 * hidden_size, T(1));
      d->bias = Tensor<T>({4 * hidden_size}, std::move(b), true);
    }
  }

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_; }
  std::size_t output_size() const { return 2 * hidden_; }

  // seq: [T x N x D] time-major. Returns T tensors of shape [N x 2H]; rows
  // past a sequence's length are exactly zero.
  std::vector<Tensor<T>> forward(const Tensor<T>& seq,
                                 const std::vector<std::size_t>& lengths) const {
    detail::require_rank(seq.shape(), 3, "bilstm_forward");
    const std::size_t steps = seq.dim(0), N = seq.dim(1);
    if (seq.dim(2) != input_size_)
      throw Error(ErrorKind::dimension,
                  "bilstm_forward: input width " + std::to_string(seq.dim(2)) +
                      " but layer expects " + std::to_string(input_size_));
    if (lengths.size() != N)
      throw Error(ErrorKind::dimension, "bilstm_forward: " +
                                            std::to_string(lengths.size()) +
                                            " lengths for batch of " +
                                            std::to_string(N));
    for (auto len : lengths)
      if (len == 0 || len > steps)
        throw Error(ErrorKind::degenerate_length,
                    "bilstm_forward: sequence with empty valid prefix");
    auto f = run(fwd_, seq, lengths, false);
    auto b = run(bwd_, seq, lengths, true);
    std::vector<Tensor<T>> out;
    out.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) out.push_back(concat_last_axis<T>({f[t], b[t]}));
    return out;
  }

  // Single sequence [T x D] with a 0/1 mask [T]; returns [T x 2H].
  Tensor<T> forward(const Tensor<T>& seq, const Tensor<T>& mask) const {
    detail::require_rank(seq.shape(), 2, "bilstm_forward");
    if (mask.size() != seq.dim(0))
      detail::dim_error("bilstm_forward", seq.shape(), mask.shape());
    const std::size_t len = detail::prefix_length(mask);
    if (len == 0)
      throw Error(ErrorKind::degenerate_length,
                  "bilstm_forward: empty valid prefix");
    auto steps = forward(reshape(seq, {seq.dim(0), 1, seq.dim(1)}), {len});
    return concat_rows(steps);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    for (auto [name, d] : {std::pair{"fwd", &fwd_}, std::pair{"bwd", &bwd_}}) {
      out.emplace_back(prefix + "." + name + ".wx", &d->wx);
      out.emplace_back(prefix + "." + name + ".wh", &d->wh);
      out.emplace_back(prefix + "." + name + ".bias", &d->bias);
    }
  }

 private:
  struct Direction {
    Tensor<T> wx, wh, bias;
  };

  std::vector<Tensor<T>> run(const Direction& d, const Tensor<T>& seq,
                             const std::vector<std::size_t>& lengths,
                             bool reverse) const {
    const std::size_t steps = seq.dim(0), N = seq.dim(1), H = hidden_;
    // input projections for every step at once
    Tensor<T> xz = add(matmul(reshape(seq, {steps * N, input_size_}), d.wx), d.bias);
    Tensor<T> h = Tensor<T>::zeros({N, H});
    Tensor<T> c = Tensor<T>::zeros({N, H});
    const Tensor<T> zero = Tensor<T>::zeros({N, H});
    std::vector<Tensor<T>> out(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = reverse ? steps - 1 - k : k;
      auto keep = detail::keep_at(lengths, t);
      bool any = false;
      for (auto x : keep) any = any || x;
      if (!any) {
        out[t] = zero;
        continue;
      }
      Tensor<T> z = add(slice_rows(xz, t * N, (t + 1) * N), matmul(h, d.wh));
      Tensor<T> i = sigmoid(slice_cols(z, 0, H));
      Tensor<T> f = sigmoid(slice_cols(z, H, 2 * H));
      Tensor<T> g = mlcat::tanh(slice_cols(z, 2 * H, 3 * H));
      Tensor<T> o = sigmoid(slice_cols(z, 3 * H, 4 * H));
      Tensor<T> c_new = add(mul(f, c), mul(i, g));
      Tensor<T> h_new = mul(o, mlcat::tanh(c_new));
      if (detail::all_set(keep)) {
        c = c_new;
        h = h_new;
        out[t] = h_new;
      } else {
        c = blend_rows(keep, c_new, c);
        h = blend_rows(keep, h_new, h);
        out[t] = blend_rows(keep, h_new, zero);
      }
    }
    return out;
  }

  std::size_t input_size_ = 0, hidden_ = 0;
  Direction fwd_, bwd_;
};

template <class T>
struct Attended {
  Tensor<T> vec;      // [N x h]
  Tensor<T> weights;  // [N x T]
};

// Additive attention pooling: u_t = tanh(W s_t + b), alpha = softmax(u_t . ctx)
// over valid steps, output = sum_t alpha_t s_t.
template <class T>
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(std::size_t state_size, std::size_t attn_dim, Rng& rng)
      : proj_(state_size, attn_dim, rng),
        context_(glorot_uniform<T>({attn_dim, 1}, attn_dim, 1, rng)) {}

  std::size_t attn_dim() const { return context_.dim(0); }

  Attended<T> forward(const std::vector<Tensor<T>>& states,
                      const std::vector<std::size_t>& lengths) const {
    if (states.empty())
      throw Error(ErrorKind::degenerate_length, "attention: no time steps");
    const std::size_t steps = states.size(), N = states[0].dim(0);
    Tensor<T> stacked = concat_rows(states);
    Tensor<T> u = mlcat::tanh(proj_.forward(stacked));
    Tensor<T> scores = transpose(reshape(matmul(u, context_), {steps, N}));
    std::vector<T> m(N * steps, T(0));
    for (std::size_t n = 0; n < N; ++n) {
      if (lengths.at(n) == 0)
        throw Error(ErrorKind::empty_support,
                    "attention: sequence " + std::to_string(n) + " fully masked");
      for (std::size_t t = 0; t < std::min(lengths[n], steps); ++t) m[n * steps + t] = T(1);
    }
    Tensor<T> mask({N, steps}, std::move(m));
    Tensor<T> alpha = softmax_rows(scores, &mask);
    Tensor<T> vec = mul(states[0], slice_cols(alpha, 0, 1));
    for (std::size_t t = 1; t < steps; ++t)
      vec = add(vec, mul(states[t], slice_cols(alpha, t, t + 1)));
    return {vec, alpha};
  }

  // Single sequence [T x h] with a 0/1 mask [T]; returns vec [h], weights [T].
  Attended<T> forward(const Tensor<T>& states, const Tensor<T>& mask) const {
    detail::require_rank(states.shape(), 2, "attention_aggregate");
    if (mask.size() != states.dim(0))
      detail::dim_error("attention_aggregate", states.shape(), mask.shape());
    auto m = mask.data();
    bool any = false;
    for (auto v : m) any = any || v != T(0);
    if (!any) throw Error(ErrorKind::empty_support, "attention: fully masked");
    const std::size_t len = detail::prefix_length(mask);
    std::vector<Tensor<T>> steps;
    for (std::size_t t = 0; t < states.dim(0); ++t) steps.push_back(slice_rows(states, t, t + 1));
    auto r = forward(steps, {len});
    return {reshape(r.vec, {states.dim(1)}), reshape(r.weights, {states.dim(0)})};
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    proj_.collect(prefix + ".proj", out);
    out.emplace_back(prefix + ".context", &context_);
  }

 private:
  Dense<T> proj_;
  Tensor<T> context_;
};

// Convolutions with kernel widths 2, 3 and 4 followed by max-over-time
// pooling; output width is 3 x filters_per_kernel.
template <class T>
class ConvBlock {
 public:
  static constexpr std::size_t kKernels[3] = {2, 3, 4};
  static constexpr std::size_t kMaxKernel = 4;

  ConvBlock() = default;
  ConvBlock(std::size_t input_size, std::size_t filters_per_kernel, Rng& rng)
      : input_size_(input_size), filters_(filters_per_kernel) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t k = kKernels[i];
      kernels_[i] = glorot_uniform<T>({k, input_size, filters_per_kernel},
                                      k * input_size, k * filters_per_kernel, rng);
      biases_[i] = Tensor<T>::zeros({filters_per_kernel}, true);
    }
  }

  std::size_t output_size() const { return 3 * filters_; }
  std::size_t filters_per_kernel() const { return filters_; }

  // words [N x W x D] batch-major, mask [N x W]. Inputs shorter than the
  // widest kernel are right-padded with masked zero words.
  Tensor<T> forward(const Tensor<T>& words, const Tensor<T>& mask) const {
    detail::require_rank(words.shape(), 3, "conv_sentence_vec");
    const std::size_t N = words.dim(0), W = words.dim(1), D = words.dim(2);
    if (D != input_size_)
      throw Error(ErrorKind::dimension,
                  "conv_sentence_vec: input width " + std::to_string(D) +
                      " but block expects " + std::to_string(input_size_));
    Tensor<T> x = words, m = mask;
    if (W < kMaxKernel) {
      const std::size_t pad = kMaxKernel - W;
      x = reshape(concat_last_axis<T>({reshape(words, {N, W * D}),
                                       Tensor<T>::zeros({N, pad * D})}),
                  {N, kMaxKernel, D});
      std::vector<T> mv(N * kMaxKernel, T(0));
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < W; ++t) mv[n * kMaxKernel + t] = mask.data()[n * W + t];
      m = Tensor<T>({N, kMaxKernel}, std::move(mv));
    }
    std::vector<Tensor<T>> pooled;
    for (std::size_t i = 0; i < 3; ++i)
      pooled.push_back(max_over_time(add(conv1d(x, kernels_[i], m), biases_[i])));
    return concat_last_axis(pooled);
  }

  // Single sentence [W x D] with a 0/1 mask [W]; returns [3F].
  Tensor<T> forward_single(const Tensor<T>& words, const Tensor<T>& mask) const {
    detail::require_rank(words.shape(), 2, "conv_sentence_vec");
    auto out = forward(reshape(words, {1, words.dim(0), words.dim(1)}),
                       reshape(mask, {1, mask.size()}));
    return reshape(out, {output_size()});
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string k = std::to_string(kKernels[i]);
      out.emplace_back(prefix + ".k" + k + ".filters", &kernels_[i]);
      out.emplace_back(prefix + ".k" + k + ".bias", &biases_[i]);
    }
  }

 private:
  std::size_t input_size_ = 0, filters_ = 0;
  Tensor<T> kernels_[3], biases_[3];
};

}  // namespace mlcat
