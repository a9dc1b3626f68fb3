#pragma once

// Finite-difference checks for every differentiable op, layer and loss, on
// random small shapes in double precision. Shared by the unit tests and the
// acceptance binary.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mlcat/losses.hpp"
#include "mlcat/model.hpp"
#include "support/gradcheck.hpp"

namespace mlcat::testing {

struct SuiteEntry {
  std::string name;
  std::size_t cases = 0;
  double worst = 0;  // largest relative error seen
};

namespace detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<std::size_t> random_lengths(std::mt19937_64& rng, std::size_t n, std::size_t max) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = pick(rng, 1, max);
  out[pick(rng, 0, n - 1)] = max;  // at least one full-length row
  return out;
}

inline LabelMatrix random_labels(std::mt19937_64& rng, std::size_t n, std::size_t L, bool nonempty) {
  LabelMatrix y(n, L);
  std::bernoulli_distribution b(0.4);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < L; ++j) y(i, j) = b(rng);
    if (nonempty && y.positives(i) == 0) y(i, pick(rng, 0, L - 1)) = 1;
  }
  return y;
}

inline void track(SuiteEntry& e, const GradCheck& g) {
  ++e.cases;
  e.worst = std::max(e.worst, g.rel_error);
}

using CaseFn = std::function<GradCheck(std::mt19937_64&)>;

}  // namespace detail

inline std::vector<std::pair<std::string, detail::CaseFn>> gradient_cases() {
  using detail::pick;
  using D = double;
  std::vector<std::pair<std::string, detail::CaseFn>> c;

  c.emplace_back("add (broadcast)", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 4), k = pick(rng, 1, 4);
    auto a = random_tensor({r, k}, rng);
    auto b = random_tensor({k}, rng);
    return check_gradients([&] { return probe_sum(add(a, b)); }, {&a, &b});
  });
  c.emplace_back("sub", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 4), k = pick(rng, 1, 4);
    auto a = random_tensor({r, k}, rng);
    auto b = random_tensor({r, k}, rng);
    return check_gradients([&] { return probe_sum(sub(a, b)); }, {&a, &b});
  });
  c.emplace_back("mul (broadcast)", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 4), k = pick(rng, 1, 4);
    auto a = random_tensor({r, k}, rng);
    auto b = random_tensor({r, 1}, rng);
    return check_gradients([&] { return probe_sum(mul(a, b)); }, {&a, &b});
  });
  c.emplace_back("scale/add_scalar", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 5), pick(rng, 1, 3)}, rng);
    return check_gradients([&] { return probe_sum(add_scalar(scale(a, D(-1.7)), D(0.3))); }, {&a});
  });
  c.emplace_back("tanh", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 5), pick(rng, 1, 4)}, rng);
    return check_gradients([&] { return probe_sum(mlcat::tanh(a)); }, {&a});
  });
  c.emplace_back("sigmoid", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 5), pick(rng, 1, 4)}, rng, 3.0);
    return check_gradients([&] { return probe_sum(sigmoid(a)); }, {&a});
  });
  c.emplace_back("log", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 5), pick(rng, 1, 4)};
    std::uniform_real_distribution<double> u(0.5, 2.0);
    std::vector<double> v(numel(s));
    for (auto& x : v) x = u(rng);
    Tensor<double> a(s, v, true);
    return check_gradients([&] { return probe_sum(mlcat::log(a)); }, {&a});
  });
  c.emplace_back("clamp", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 2, 6), pick(rng, 1, 4)}, rng);
    for (auto& x : a.data())
      if (std::abs(std::abs(x) - 1.0) < 1e-3) x += 0.01;
    return check_gradients([&] { return probe_sum(clamp(a, D(-1), D(1))); }, {&a});
  });
  c.emplace_back("sum/mean", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 5), pick(rng, 1, 4)}, rng);
    return check_gradients([&] { return add(sum(mul(a, a)), mean(mlcat::tanh(a))); }, {&a});
  });
  c.emplace_back("matmul", [](std::mt19937_64& rng) {
    const auto m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
    auto a = random_tensor({m, k}, rng);
    auto b = random_tensor({k, n}, rng);
    return check_gradients([&] { return probe_sum(matmul(a, b)); }, {&a, &b});
  });
  c.emplace_back("reshape/transpose", [](std::mt19937_64& rng) {
    const auto m = pick(rng, 1, 4), n = pick(rng, 1, 4);
    auto a = random_tensor({m * n}, rng);
    return check_gradients([&] { return probe_sum(transpose(reshape(a, {m, n}))); }, {&a});
  });
  c.emplace_back("concat_last_axis", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 4);
    auto a = random_tensor({r, pick(rng, 1, 3)}, rng);
    auto b = random_tensor({r, pick(rng, 1, 3)}, rng);
    return check_gradients([&] { return probe_sum(concat_last_axis<D>({a, b, a})); }, {&a, &b});
  });
  c.emplace_back("concat_rows", [](std::mt19937_64& rng) {
    const auto k = pick(rng, 1, 4);
    auto a = random_tensor({pick(rng, 1, 3), k}, rng);
    auto b = random_tensor({pick(rng, 1, 3), k}, rng);
    return check_gradients([&] { return probe_sum(concat_rows<D>({a, b})); }, {&a, &b});
  });
  c.emplace_back("slice_rows/slice_cols", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 2, 5), k = pick(rng, 2, 5);
    auto a = random_tensor({r, k}, rng);
    const auto r0 = pick(rng, 0, r - 1), c0 = pick(rng, 0, k - 1);
    const auto r1 = pick(rng, r0 + 1, r), c1 = pick(rng, c0 + 1, k);
    return check_gradients(
        [&] { return add(probe_sum(slice_rows(a, r0, r1)), probe_sum(slice_cols(a, c0, c1), 5)); },
        {&a});
  });
  c.emplace_back("gather_rows", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 4);
    auto a = random_tensor({r, pick(rng, 1, 3)}, rng);
    std::vector<std::ptrdiff_t> idx(pick(rng, 1, 6));
    for (auto& i : idx) i = static_cast<std::ptrdiff_t>(pick(rng, 0, r)) - 1;  // -1 = zero row
    return check_gradients([&] { return probe_sum(gather_rows(a, idx)); }, {&a});
  });
  c.emplace_back("blend_rows", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 5), k = pick(rng, 1, 3);
    auto a = random_tensor({r, k}, rng);
    auto b = random_tensor({r, k}, rng);
    std::vector<std::uint8_t> keep(r);
    for (auto& x : keep) x = pick(rng, 0, 1);
    return check_gradients([&] { return probe_sum(blend_rows(keep, a, b)); }, {&a, &b});
  });
  c.emplace_back("dropout (train)", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 5), pick(rng, 1, 4)}, rng);
    const auto seed = rng();
    return check_gradients(
        [&] {
          std::mt19937_64 r(seed);
          return probe_sum(dropout(a, 0.25, true, r));
        },
        {&a});
  });
  c.emplace_back("softmax (masked rows)", [](std::mt19937_64& rng) {
    const auto r = pick(rng, 1, 4), L = pick(rng, 1, 5);
    auto a = random_tensor({r, L}, rng);
    std::vector<double> m(r * L);
    for (auto& x : m) x = static_cast<double>(pick(rng, 0, 3) > 0);
    for (std::size_t i = 0; i < r; ++i) m[i * L + pick(rng, 0, L - 1)] = 1;
    Tensor<double> mask({r, L}, m);
    return check_gradients([&] { return probe_sum(softmax_rows(a, &mask)); }, {&a});
  });
  c.emplace_back("conv1d (masked)", [](std::mt19937_64& rng) {
    const auto N = pick(rng, 1, 3), W = pick(rng, 4, 7), Dm = pick(rng, 1, 3), F = pick(rng, 1, 3);
    const auto k = pick(rng, 2, 4);
    auto x = random_tensor({N, W, Dm}, rng);
    auto f = random_tensor({k, Dm, F}, rng);
    auto len = detail::random_lengths(rng, N, W);
    std::vector<double> m(N * W, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < len[n]; ++t) m[n * W + t] = 1;
    Tensor<double> mask({N, W}, m);
    // pool so -inf windows never reach the probe
    return check_gradients([&] { return probe_sum(max_over_time(conv1d(x, f, mask))); }, {&x, &f});
  });
  c.emplace_back("max_over_time", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 4)}, rng);
    return check_gradients([&] { return probe_sum(max_over_time(a)); }, {&a});
  });

  c.emplace_back("Dense", [](std::mt19937_64& rng) {
    Rng init(rng());
    Dense<D> layer(pick(rng, 1, 4), pick(rng, 1, 4), init);
    auto x = random_tensor({pick(rng, 1, 4), layer.in_features()}, rng);
    NamedParams<D> p;
    layer.collect("d", p);
    std::vector<Tensor<D>*> in{&x};
    for (auto& [n, t] : p) in.push_back(t);
    return check_gradients([&] { return probe_sum(layer.forward(x)); }, in);
  });
  c.emplace_back("BiLstmLayer", [](std::mt19937_64& rng) {
    Rng init(rng());
    const auto Tn = pick(rng, 1, 4), N = pick(rng, 1, 3), Din = pick(rng, 1, 3), H = pick(rng, 1, 3);
    BiLstmLayer<D> layer(Din, H, init);
    auto x = random_tensor({Tn, N, Din}, rng);
    auto len = detail::random_lengths(rng, N, Tn);
    NamedParams<D> p;
    layer.collect("l", p);
    std::vector<Tensor<D>*> in{&x};
    for (auto& [n, t] : p) in.push_back(t);
    return check_gradients([&] { return probe_sum(concat_rows(layer.forward(x, len))); }, in);
  });
  c.emplace_back("AttentionLayer", [](std::mt19937_64& rng) {
    Rng init(rng());
    const auto Tn = pick(rng, 1, 4), N = pick(rng, 1, 3), h = pick(rng, 1, 4), a = pick(rng, 1, 3);
    AttentionLayer<D> layer(h, a, init);
    std::vector<Tensor<D>> states;
    for (std::size_t t = 0; t < Tn; ++t) states.push_back(random_tensor({N, h}, rng));
    auto len = detail::random_lengths(rng, N, Tn);
    NamedParams<D> p;
    layer.collect("a", p);
    std::vector<Tensor<D>*> in;
    for (auto& s : states) in.push_back(&s);
    for (auto& [n, t] : p) in.push_back(t);
    return check_gradients([&] { return probe_sum(layer.forward(states, len).vec); }, in);
  });
  c.emplace_back("ConvBlock", [](std::mt19937_64& rng) {
    Rng init(rng());
    const auto N = pick(rng, 1, 3), W = pick(rng, 1, 6), Din = pick(rng, 1, 3), F = pick(rng, 1, 2);
    ConvBlock<D> layer(Din, F, init);
    auto x = random_tensor({N, W, Din}, rng);
    auto len = detail::random_lengths(rng, N, W);
    std::vector<double> m(N * W, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < len[n]; ++t) m[n * W + t] = 1;
    Tensor<D> mask({N, W}, m);
    NamedParams<D> p;
    layer.collect("c", p);
    std::vector<Tensor<D>*> in{&x};
    for (auto& [n, t] : p) in.push_back(t);
    return check_gradients([&] { return probe_sum(layer.forward(x, mask)); }, in);
  });

  c.emplace_back("ebce_loss", [](std::mt19937_64& rng) {
    const auto n = pick(rng, 1, 6), L = pick(rng, 1, 5);
    auto logits = random_tensor({n, L}, rng, 2.0);
    auto y = detail::random_labels(rng, n, L, false);
    EbceWeights w{L, std::vector<double>(2 * L)};
    for (auto& v : w.w) v = std::uniform_real_distribution<double>(0.2, 3.0)(rng);
    return check_gradients([&] { return ebce_loss(sigmoid(logits), y, w); }, {&logits});
  });
  c.emplace_back("nce_loss", [](std::mt19937_64& rng) {
    const auto n = pick(rng, 1, 6), L = pick(rng, 2, 5);
    auto logits = random_tensor({n, L}, rng, 2.0);
    auto y = detail::random_labels(rng, n, L, true);
    QuietWarnings quiet;
    auto w = nce_weights(y);
    return check_gradients([&] { return nce_loss(softmax_rows(logits), y, w); }, {&logits});
  });
  c.emplace_back("cross_entropy", [](std::mt19937_64& rng) {
    const auto n = pick(rng, 1, 6), K = pick(rng, 2, 5);
    auto logits = random_tensor({n, K}, rng, 2.0);
    std::vector<std::size_t> t(n);
    for (auto& x : t) x = pick(rng, 0, K - 1);
    return check_gradients([&] { return cross_entropy(softmax_rows(logits), t); }, {&logits});
  });
  return c;
}

// Tiny two-level model in double precision; gradients of the EBCE or NCE
// loss with respect to every parameter.
inline GradCheck full_model_case(std::mt19937_64& rng, LossKind loss) {
  using detail::pick;
  const std::size_t B = pick(rng, 1, 3), S = 3, W = 5, dw = 3, ds = 2, L = 3;
  EmbeddingTable words(dw);
  SentenceEmbeddingStore sents(ds);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<Post> posts;
  for (std::size_t b = 0; b < B; ++b) {
    Post p;
    p.id = "p" + std::to_string(b);
    const auto ns = pick(rng, 1, S);
    for (std::size_t s = 0; s < ns; ++s) {
      std::vector<std::string> sent;
      const auto nw = pick(rng, 1, W);
      for (std::size_t w = 0; w < nw; ++w) {
        std::string tok = "t" + std::to_string(pick(rng, 0, 9));
        if (!words.contains(tok)) {
          std::vector<float> v(dw);
          for (auto& x : v) x = nd(rng);
          words.add(tok, v);
        }
        sent.push_back(tok);
      }
      p.sentences.push_back(sent);
    }
    std::vector<float> sv(ns * ds);
    for (auto& x : sv) x = nd(rng);
    sents.add(p.id, ns, sv);
    p.labels.insert(pick(rng, 0, L - 1));
    if (pick(rng, 0, 1)) p.labels.insert(pick(rng, 0, L - 1));
    posts.push_back(std::move(p));
  }
  EmbeddingSources src;
  src.word["w1"] = &words;
  src.sentence["s1"] = &sents;
  std::vector<const Post*> ptrs;
  for (auto& p : posts) ptrs.push_back(&p);
  auto batch = build_batch(ptrs, src, {S, W}, L);
  SourceCatalog cat{{{"w1", dw}}, {{"s1", ds}}};
  ModelConfig cfg;
  cfg.lstm_dim = 2;
  cfg.attn_dim = 2;
  cfg.filters_per_kernel = 2;
  cfg.max_sentences = S;
  cfg.max_words = W;
  cfg.dropout = 0.0;
  cfg.loss = loss;
  cfg.seed = rng();
  Model<double> model(parse_arch("s(wl(w1), wc(w1), s1)", cat), cfg, cat, L);
  auto y = batch.label_matrix();
  auto params = model.params();
  std::vector<Tensor<double>*> in;
  for (auto& [n, t] : params) in.push_back(t);
  QuietWarnings quiet;
  if (loss == LossKind::ebce) {
    auto w = ebce_weights(y);
    return check_gradients([&] { return ebce_loss(model.forward(batch).probs, y, w); }, in);
  }
  auto w = nce_weights(y);
  return check_gradients([&] { return nce_loss(model.forward(batch).probs, y, w); }, in);
}

inline std::vector<SuiteEntry> gradient_suite(std::size_t cases = 20, std::uint64_t seed = 2024) {
  std::vector<SuiteEntry> out;
  std::mt19937_64 rng(seed);
  for (auto& [name, fn] : gradient_cases()) {
    SuiteEntry e{name};
    for (std::size_t i = 0; i < cases; ++i) detail::track(e, fn(rng));
    out.push_back(e);
  }
  for (auto loss : {LossKind::ebce, LossKind::nce}) {
    SuiteEntry e{"full model (" + to_string(loss) + ")"};
    for (std::size_t i = 0; i < cases; ++i) detail::track(e, full_model_case(rng, loss));
    out.push_back(e);
  }
  return out;
}

}  // namespace mlcat::testing
