#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mlcat/layers.hpp"
#include "support/gradcheck.hpp"

using namespace mlcat;
using mlcat::testing::check_gradients;
using mlcat::testing::probe_sum;
using mlcat::testing::random_tensor;

namespace {

template <class T>
NamedParams<T> params_of(auto& layer) {
  NamedParams<T> p;
  layer.collect("x", p);
  return p;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM over seq[0..len) in the given direction; returns [T x H]
// with zero rows outside the valid prefix.
std::vector<double> lstm_oracle(const std::vector<double>& seq, std::size_t T, std::size_t D,
                                std::size_t len, std::size_t H, std::span<const double> wx,
                                std::span<const double> wh, std::span<const double> b,
                                bool reverse) {
  std::vector<double> out(T * H, 0.0), h(H, 0.0), c(H, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t t = reverse ? len - 1 - k : k;
    std::vector<double> z(4 * H);
    for (std::size_t j = 0; j < 4 * H; ++j) {
      double s = b[j];
      for (std::size_t d = 0; d < D; ++d) s += seq[t * D + d] * wx[d * 4 * H + j];
      for (std::size_t q = 0; q < H; ++q) s += h[q] * wh[q * 4 * H + j];
      z[j] = s;
    }
    for (std::size_t q = 0; q < H; ++q) {
      const double i = sig(z[q]), f = sig(z[H + q]), g = std::tanh(z[2 * H + q]),
                   o = sig(z[3 * H + q]);
      c[q] = f * c[q] + i * g;
      h[q] = o * std::tanh(c[q]);
      out[t * H + q] = h[q];
    }
  }
  return out;
}

Tensor<double> prefix_mask(std::size_t T, std::size_t len) {
  std::vector<double> m(T, 0.0);
  for (std::size_t t = 0; t < len; ++t) m[t] = 1.0;
  return Tensor<double>({T}, m);
}

}  // namespace

TEST(Dense, ShapesAndGlorotRange) {
  Rng rng(1);
  Dense<double> d(6, 4, rng);
  auto p = params_of<double>(d);
  ASSERT_EQ(p.size(), 2u);
  const double limit = std::sqrt(6.0 / 10.0);
  for (double w : p[0].second->data()) EXPECT_LE(std::abs(w), limit);
  for (double b : p[1].second->data()) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(d.forward(Tensor<double>::zeros({3, 6})).shape(), (Shape{3, 4}));
}

TEST(BiLstm, ForgetGateBiasIsOne) {
  Rng rng(2);
  BiLstmLayer<double> l(3, 4, rng);
  for (auto& [name, t] : params_of<double>(l)) {
    if (name.find("bias") == std::string::npos) continue;
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(t->data()[j], (j >= 4 && j < 8) ? 1.0 : 0.0);
  }
}

TEST(BiLstm, ZeroParametersGiveZeroOutput) {
  Rng rng(3);
  BiLstmLayer<double> l(3, 2, rng);
  for (auto& [name, t] : params_of<double>(l))
    for (auto& v : t->data()) v = 0.0;
  std::mt19937_64 g(4);
  auto out = l.forward(random_tensor({5, 3}, g, 1.0, false), prefix_mask(5, 5));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(BiLstm, SingleStepBothDirectionsAgree) {
  Rng rng(5);
  BiLstmLayer<double> l(3, 4, rng);
  auto p = params_of<double>(l);
  for (std::size_t i = 0; i < 3; ++i)  // copy fwd params into bwd
    std::copy(p[i].second->data().begin(), p[i].second->data().end(),
              p[i + 3].second->data().begin());
  std::mt19937_64 g(6);
  auto out = l.forward(random_tensor({1, 3}, g, 1.0, false), prefix_mask(1, 1));
  ASSERT_EQ(out.shape(), (Shape{1, 8}));
  for (std::size_t q = 0; q < 4; ++q) EXPECT_EQ(out.data()[q], out.data()[4 + q]);
}

TEST(BiLstm, MatchesLoopOracle) {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 1 + g() % 6, D = 1 + g() % 4, H = 1 + g() % 3, len = 1 + g() % T;
    Rng rng(g());
    BiLstmLayer<double> l(D, H, rng);
    auto p = params_of<double>(l);
    for (auto& [n, t] : p)  // non-trivial biases
      for (auto& v : t->data()) v += 0.1 * std::normal_distribution<double>()(g);
    auto seq = random_tensor({T, D}, g, 1.0, false);
    auto out = l.forward(seq, prefix_mask(T, len));
    std::vector<double> s(seq.data().begin(), seq.data().end());
    auto f = lstm_oracle(s, T, D, len, H, p[0].second->data(), p[1].second->data(),
                         p[2].second->data(), false);
    auto b = lstm_oracle(s, T, D, len, H, p[3].second->data(), p[4].second->data(),
                         p[5].second->data(), true);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t q = 0; q < H; ++q) {
        EXPECT_NEAR(out.data()[t * 2 * H + q], f[t * H + q], 1e-12);
        EXPECT_NEAR(out.data()[t * 2 * H + H + q], b[t * H + q], 1e-12);
      }
  }
}

TEST(BiLstm, MaskedStepsAreExactlyZero) {
  std::mt19937_64 g(8);
  Rng rng(9);
  BiLstmLayer<double> l(2, 3, rng);
  auto seq = random_tensor({4, 3, 2}, g, 1.0, false);
  std::vector<std::size_t> len{4, 1, 2};
  auto out = l.forward(seq, len);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t q = 0; q < 6; ++q) {
        const double v = out[t].data()[n * 6 + q];
        if (t >= len[n]) {
          EXPECT_EQ(v, 0.0);
        } else {
          EXPECT_NE(v, 0.0);
        }
      }
}

TEST(BiLstm, BatchedEqualsPerSequence) {
  std::mt19937_64 g(10);
  Rng rng(11);
  BiLstmLayer<double> l(3, 2, rng);
  auto seq = random_tensor({5, 2, 3}, g, 1.0, false);
  std::vector<std::size_t> len{3, 5};
  auto batched = l.forward(seq, len);
  for (std::size_t n = 0; n < 2; ++n) {
    std::vector<double> one;
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t d = 0; d < 3; ++d) one.push_back(seq.data()[(t * 2 + n) * 3 + d]);
    auto single = l.forward(Tensor<double>({5, 3}, one), prefix_mask(5, len[n]));
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t q = 0; q < 4; ++q)
        EXPECT_NEAR(batched[t].data()[n * 4 + q], single.data()[t * 4 + q], 1e-14);
  }
}

TEST(BiLstm, EmptyPrefixIsDegenerate) {
  Rng rng(12);
  BiLstmLayer<double> l(2, 2, rng);
  try {
    l.forward(Tensor<double>::zeros({3, 2}), prefix_mask(3, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_length);
  }
}

TEST(BiLstm, GateGradientsMatchFiniteDifferences) {
  std::mt19937_64 g(13);
  Rng rng(14);
  BiLstmLayer<double> l(3, 2, rng);
  auto seq = random_tensor({4, 3}, g);
  std::vector<Tensor<double>*> in;
  auto p = params_of<double>(l);
  for (auto& [n, t] : p) in.push_back(t);
  auto mask = prefix_mask(4, 3);
  auto r = check_gradients([&] { return sum(l.forward(seq, mask)); }, in, 1e-3);
  EXPECT_LE(r.rel_error, 1e-3);
}

TEST(Attention, SingleStepIsIdentity) {
  Rng rng(15);
  AttentionLayer<double> a(4, 3, rng);
  Tensor<double> s({1, 4}, {0.5, -1, 2, 3});
  auto r = a.forward(s, prefix_mask(1, 1));
  EXPECT_EQ(r.weights.data()[0], 1.0);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.vec.data()[k], s.data()[k]);
}

TEST(Attention, ZeroContextGivesUniformWeightsAndMean) {
  Rng rng(16);
  AttentionLayer<double> a(3, 2, rng);
  for (auto& [n, t] : params_of<double>(a))
    if (n == "x.context")
      for (auto& v : t->data()) v = 0.0;
  std::mt19937_64 g(17);
  auto s = random_tensor({5, 3}, g, 1.0, false);
  auto r = a.forward(s, prefix_mask(5, 4));
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(r.weights.data()[t], t < 4 ? 0.25 : 0.0, 1e-15);
  for (std::size_t k = 0; k < 3; ++k) {
    double m = 0;
    for (std::size_t t = 0; t < 4; ++t) m += s.data()[t * 3 + k] / 4;
    EXPECT_NEAR(r.vec.data()[k], m, 1e-12);
  }
}

TEST(Attention, WeightsAreProbabilitiesAndZeroWhenMasked) {
  std::mt19937_64 g(18);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + g() % 7, h = 1 + g() % 5, len = 1 + g() % T;
    Rng rng(g());
    AttentionLayer<double> a(h, 1 + g() % 4, rng);
    auto r = a.forward(random_tensor({T, h}, g, 2.0, false), prefix_mask(T, len));
    double total = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const double w = r.weights.data()[t];
      EXPECT_GE(w, 0.0);
      if (t >= len) {
        EXPECT_EQ(w, 0.0);
      }
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Attention, PermutingStepsPermutesWeights) {
  std::mt19937_64 g(19);
  Rng rng(20);
  AttentionLayer<double> a(3, 4, rng);
  auto s = random_tensor({4, 3}, g, 1.0, false);
  std::vector<double> swapped(s.data().begin(), s.data().end());
  std::swap_ranges(swapped.begin(), swapped.begin() + 3, swapped.begin() + 6);  // rows 0 and 2
  auto r1 = a.forward(s, prefix_mask(4, 4));
  auto r2 = a.forward(Tensor<double>({4, 3}, swapped), prefix_mask(4, 4));
  EXPECT_NEAR(r1.weights.data()[0], r2.weights.data()[2], 1e-15);
  EXPECT_NEAR(r1.weights.data()[2], r2.weights.data()[0], 1e-15);
  EXPECT_NEAR(r1.weights.data()[1], r2.weights.data()[1], 1e-15);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r1.vec.data()[k], r2.vec.data()[k], 1e-12);
}

TEST(Attention, TiedScoresSplitWeightEvenly) {
  Rng rng(21);
  AttentionLayer<double> a(2, 3, rng);
  Tensor<double> s({3, 2}, {1, 2, 1, 2, -3, 0.5});
  auto r = a.forward(s, prefix_mask(3, 3));
  EXPECT_EQ(r.weights.data()[0], r.weights.data()[1]);
}

TEST(Attention, MatchesLoopOracle) {
  std::mt19937_64 g(22);
  Rng rng(23);
  const std::size_t T = 5, h = 4, A = 3, len = 4;
  AttentionLayer<double> a(h, A, rng);
  auto p = params_of<double>(a);
  auto W = p[0].second->data(), b = p[1].second->data(), ctx = p[2].second->data();
  auto s = random_tensor({T, h}, g, 1.0, false);
  auto r = a.forward(s, prefix_mask(T, len));
  std::vector<double> score(len);
  for (std::size_t t = 0; t < len; ++t) {
    double e = 0;
    for (std::size_t j = 0; j < A; ++j) {
      double u = b[j];
      for (std::size_t k = 0; k < h; ++k) u += s.data()[t * h + k] * W[k * A + j];
      e += std::tanh(u) * ctx[j];
    }
    score[t] = std::exp(e);
  }
  double z = 0;
  for (double e : score) z += e;
  for (std::size_t k = 0; k < h; ++k) {
    double v = 0;
    for (std::size_t t = 0; t < len; ++t) v += score[t] / z * s.data()[t * h + k];
    EXPECT_NEAR(r.vec.data()[k], v, 1e-12);
  }
}

TEST(Attention, FullyMaskedIsEmptySupport) {
  Rng rng(24);
  AttentionLayer<double> a(2, 2, rng);
  try {
    a.forward(Tensor<double>::zeros({3, 2}), prefix_mask(3, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_support);
  }
}

TEST(Attention, GradientCheck) {
  std::mt19937_64 g(25);
  Rng rng(26);
  AttentionLayer<double> a(3, 2, rng);
  auto s = random_tensor({4, 3}, g);
  std::vector<Tensor<double>*> in{&s};
  auto p = params_of<double>(a);
  for (auto& [n, t] : p) in.push_back(t);
  auto mask = prefix_mask(4, 3);
  auto r = check_gradients([&] { return probe_sum(a.forward(s, mask).vec); }, in, 1e-3);
  EXPECT_LE(r.rel_error, 1e-4);
}

TEST(ConvBlock, HundredFiltersGiveWidthThreeHundred) {
  Rng rng(27);
  ConvBlock<float> c(5, 100, rng);
  EXPECT_EQ(c.output_size(), 300u);
  Tensor<float> mask = Tensor<float>::filled({6}, 1.0f);
  EXPECT_EQ(c.forward_single(Tensor<float>::zeros({6, 5}), mask).shape(), (Shape{300}));
}

TEST(ConvBlock, ZeroWordsGiveZeros) {
  Rng rng(28);
  ConvBlock<double> c(4, 3, rng);
  auto out = c.forward_single(Tensor<double>::zeros({7, 4}), prefix_mask(7, 7));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

// Brute force over every window that lies fully inside the valid prefix;
// a kernel with no such window contributes zeros.
TEST(ConvBlock, MatchesWindowEnumeration) {
  std::mt19937_64 g(29);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t W = 1 + g() % 8, D = 1 + g() % 3, F = 1 + g() % 3, len = 1 + g() % W;
    Rng rng(g());
    ConvBlock<double> c(D, F, rng);
    auto p = params_of<double>(c);
    for (std::size_t i = 1; i < 6; i += 2)
      for (auto& v : p[i].second->data()) v = std::normal_distribution<double>()(g);
    auto x = random_tensor({W, D}, g, 1.0, false);
    auto out = c.forward_single(x, prefix_mask(W, len));
    for (std::size_t ki = 0; ki < 3; ++ki) {
      const std::size_t k = 2 + ki;
      auto filt = p[2 * ki].second->data();
      auto bias = p[2 * ki + 1].second->data();
      for (std::size_t f = 0; f < F; ++f) {
        double best = -INFINITY;
        for (std::size_t t = 0; t + k <= len; ++t) {
          double s = bias[f];
          for (std::size_t j = 0; j < k; ++j)
            for (std::size_t d = 0; d < D; ++d)
              s += x.data()[(t + j) * D + d] * filt[(j * D + d) * F + f];
          best = std::max(best, s);
        }
        if (len < k) best = 0.0;
        EXPECT_NEAR(out.data()[ki * F + f], best, 1e-12) << "W=" << W << " len=" << len;
      }
    }
  }
}

TEST(ConvBlock, TrailingPaddingNeverMatters) {
  std::mt19937_64 g(30);
  Rng rng(31);
  ConvBlock<double> c(3, 4, rng);
  for (std::size_t len = 1; len <= 6; ++len) {
    auto x = random_tensor({len, 3}, g, 1.0, false);
    auto ref = c.forward_single(x, prefix_mask(len, len));
    for (std::size_t extra : {1u, 5u, 20u}) {
      auto junk = random_tensor({extra, 3}, g, 5.0, false);
      auto padded = concat_rows<double>({x, junk});
      auto out = c.forward_single(padded, prefix_mask(len + extra, len));
      for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.data()[i], ref.data()[i]);
    }
  }
}
