#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "mlcat/synthetic.hpp"
#include "mlcat/trainer.hpp"
#include "support/gradcheck.hpp"

using namespace mlcat;
using namespace mlcat::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::io;
}

struct SmallCorpus {
  SyntheticCorpus corpus;
  Resources res;

  explicit SmallCorpus(std::size_t posts = 300) {
    SyntheticSpec spec;
    spec.posts = posts;
    spec.word_dim = 8;
    spec.sentence_dim = 12;
    corpus = make_synthetic_corpus(spec);
    res.word.emplace("w1", corpus.words);
    res.sentence.emplace("s1", corpus.sentences);
  }
};

RunConfig small_run(const std::string& arch = "s(wl(w1), s1)") {
  RunConfig c;
  c.arch = arch;
  c.model.lstm_dim = 6;
  c.model.attn_dim = 6;
  c.model.filters_per_kernel = 4;
  c.lstm_dim_set = c.attn_dim_set = c.filters_set = true;
  c.adam.lr = 0.01;
  c.epochs = 3;
  c.batch_size = 32;
  c.runs = 1;
  c.seed = 5;
  return c;
}

const SmallCorpus& shared_corpus() {
  static SmallCorpus c;
  return c;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = Tensor<double>({3}, {1.0, -2.0, 0.5}, true);
  Adam<double> opt({{"p", &p}});
  opt.zero_grad();
  p.mutable_grad();
  opt.step();
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()),
            (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepIsLrTimesSign) {
  auto p = Tensor<double>({3}, {0.0, 0.0, 0.0}, true);
  Adam<double> opt({{"p", &p}}, AdamConfig{0.01});
  opt.zero_grad();
  auto g = p.mutable_grad();
  g[0] = 3.0;
  g[1] = -0.2;
  g[2] = 1e-3;
  opt.step();
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
  EXPECT_NEAR(p.data()[0], -0.01, 1e-9);
  EXPECT_NEAR(p.data()[1], 0.01, 1e-9);
  EXPECT_NEAR(p.data()[2], -0.01 * 1e-3 / (1e-3 + 1e-8), 1e-12);
}

TEST(Adam, HandEvaluatedSecondStep) {
  auto p = Tensor<double>({1}, {0.0}, true);
  AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  Adam<double> opt({{"p", &p}}, cfg);
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 2; ++t) {
    const double grad = t == 1 ? 2.0 : -1.0;
    opt.zero_grad();
    p.mutable_grad()[0] = grad;
    opt.step();
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.data()[0], x, 1e-12);
  }
}

TEST(Adam, QuadraticBowlConverges) {
  auto x = Tensor<double>({4}, {3.0, -2.0, 0.5, 1.5}, true);
  const std::vector<double> target{1.0, 2.0, -1.0, 0.0}, scale{1.0, 4.0, 0.5, 2.0};
  Adam<double> opt({{"x", &x}}, AdamConfig{0.05});
  auto loss_value = [&] {
    double l = 0;
    for (std::size_t i = 0; i < 4; ++i) l += scale[i] * std::pow(x.data()[i] - target[i], 2);
    return l;
  };
  std::size_t steps = 0;
  while (loss_value() >= 1e-6 && steps < 500) {
    opt.zero_grad();
    auto g = x.mutable_grad();
    for (std::size_t i = 0; i < 4; ++i) g[i] = 2 * scale[i] * (x.data()[i] - target[i]);
    opt.step();
    ++steps;
  }
  EXPECT_LT(loss_value(), 1e-6);
  EXPECT_LE(steps, 500u);
}

TEST(Adam, NonFiniteGradientNamesTheParameter) {
  auto a = Tensor<double>({2}, {1.0, 1.0}, true);
  auto b = Tensor<double>({2}, {1.0, 1.0}, true);
  Adam<double> opt({{"layer.a", &a}, {"layer.b", &b}});
  opt.zero_grad();
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[1] = std::nan("");
  try {
    opt.step();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("'layer.b'"), std::string::npos);
  }
  EXPECT_EQ(a.data()[0], 1.0);  // nothing was updated
}

TEST(RunConfigTest, DefaultsMatchTrainingSetup) {
  RunConfig c;
  EXPECT_EQ(c.adam.lr, 0.001);
  EXPECT_EQ(c.adam.beta1, 0.9);
  EXPECT_EQ(c.adam.beta2, 0.999);
  EXPECT_EQ(c.adam.eps, 1e-8);
  EXPECT_EQ(c.epochs, 10u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.model.dropout, 0.25);
  EXPECT_EQ(c.runs, 3u);
}

TEST(RunConfigTest, ParsesKeyValueText) {
  auto c = parse_run_config(
      "# comment\n"
      "arch = s(wl(elmo), tbert)\n"
      "loss = nce\n"
      "lstm_dim = 50\n"
      "dropout = 0.1\n"
      "runs = 2\n"
      "merge_validation = true\n"
      "emb.elmo = /data/elmo.wemb\n");
  EXPECT_EQ(c.arch, "s(wl(elmo), tbert)");
  EXPECT_EQ(c.model.loss, LossKind::nce);
  EXPECT_EQ(c.resolved_predictor(), Predictor::maxgap);
  EXPECT_EQ(c.model.dropout, 0.1);
  EXPECT_EQ(c.runs, 2u);
  EXPECT_TRUE(c.merge_validation);
  EXPECT_EQ(c.embeddings.at("elmo"), "/data/elmo.wemb");
  // explicit lstm_dim wins over the preset, attention comes from the preset
  auto m = c.resolved_model(parse_arch(c.arch));
  EXPECT_EQ(m.lstm_dim, 50u);
  EXPECT_EQ(m.attn_dim, 600u);
}

TEST(RunConfigTest, Errors) {
  EXPECT_EQ(kind_of([] { parse_run_config("colour = blue\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_run_config("epochs = -3\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_run_config("dropout = lots\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_run_config("just words\n"); }), ErrorKind::config);
  try {
    parse_run_config("\n\nloss = hinge\n");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  RunConfig c;
  c.predictor = Predictor::powerset;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::config);
}

TEST(Artifact, SaveLoadGivesBitwiseProbeOutputs) {
  auto& sc = shared_corpus();
  auto cfg = small_run("s(wl(w1), wc(w1), s1)");
  cfg.epochs = 1;
  auto arch = parse_arch(cfg.arch, sc.res.catalog());
  QuietWarnings quiet;
  auto a = train_model(arch, cfg.resolved_model(arch), cfg, sc.corpus.dataset.posts, sc.res,
                       sc.corpus.dataset.schema, 3);
  auto path = (std::filesystem::temp_directory_path() / "mlcat_artifact_test.mlcm").string();
  save_artifact(a, path);
  auto b = load_artifact(path);
  std::filesystem::remove(path);
  EXPECT_EQ(b.arch, a.arch);
  EXPECT_EQ(b.epoch_losses, a.epoch_losses);
  EXPECT_EQ(b.config.seed, 3u);
  std::vector<Post> probe(sc.corpus.dataset.posts.begin(), sc.corpus.dataset.posts.begin() + 40);
  auto pa = predict(a, probe, sc.res.sources());
  auto pb = predict(b, probe, sc.res.sources());
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].probs, pb[i].probs);
    EXPECT_EQ(pa[i].labels, pb[i].labels);
  }
  EXPECT_EQ(encode_artifact(a), encode_artifact(b));
}

TEST(Artifact, DecodeErrors) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.epochs = 1;
  auto arch = parse_arch(cfg.arch, sc.res.catalog());
  QuietWarnings quiet;
  auto a = train_model(arch, cfg.resolved_model(arch), cfg,
                       {sc.corpus.dataset.posts.begin(), sc.corpus.dataset.posts.begin() + 20},
                       sc.res, sc.corpus.dataset.schema, 1);
  auto bytes = encode_artifact(a);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_artifact(bad); }), ErrorKind::format);
  EXPECT_EQ(kind_of([&] { decode_artifact({bytes.begin(), bytes.end() - 4}); }), ErrorKind::format);
  auto extra = bytes;
  extra.push_back(1);
  EXPECT_EQ(kind_of([&] { decode_artifact(extra); }), ErrorKind::format);
}

TEST(Training, ThreeRunsGiveThreeArtifactsAndAnAverage) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.runs = 3;
  cfg.epochs = 1;
  QuietWarnings quiet;
  auto r = train(cfg, sc.corpus.dataset, sc.res);
  ASSERT_EQ(r.runs.size(), 3u);
  double mean = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.runs[i].seed, cfg.seed + i);
    EXPECT_EQ(r.runs[i].artifact.config.seed, cfg.seed + i);
    mean += r.runs[i].report.f_i / 3;
  }
  EXPECT_NEAR(r.average.f_i, mean, 1e-12);
  EXPECT_NE(r.runs[0].artifact.epoch_losses, r.runs[1].artifact.epoch_losses);
}

TEST(Training, FixedSeedIsReproducible) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.epochs = 2;
  QuietWarnings quiet;
  auto a = train(cfg, sc.corpus.dataset, sc.res);
  auto b = train(cfg, sc.corpus.dataset, sc.res);
  EXPECT_EQ(a.runs[0].artifact.epoch_losses, b.runs[0].artifact.epoch_losses);
  EXPECT_EQ(a.average.f_i, b.average.f_i);
  EXPECT_EQ(a.average.f_micro, b.average.f_micro);
  EXPECT_EQ(encode_artifact(a.runs[0].artifact), encode_artifact(b.runs[0].artifact));
}

TEST(Training, LossDecreasesOverFirstEpochs) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.epochs = 4;
  QuietWarnings quiet;
  auto r = train(cfg, sc.corpus.dataset, sc.res);
  auto& l = r.runs[0].artifact.epoch_losses;
  ASSERT_EQ(l.size(), 4u);
  int rises = 0;
  for (std::size_t e = 1; e < 4; ++e) rises += l[e] >= l[e - 1];
  EXPECT_LE(rises, 1);
  EXPECT_LT(l.back(), l.front());
}

TEST(Training, LogsEveryEpoch) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.epochs = 2;
  std::ostringstream log;
  QuietWarnings quiet;
  train(cfg, sc.corpus.dataset, sc.res, TrainOptions{&log});
  EXPECT_NE(log.str().find("epoch 2/2"), std::string::npos);
}

TEST(Training, CoverageAndConfigErrorsComeFirst) {
  auto& sc = shared_corpus();
  QuietWarnings quiet;
  auto cfg = small_run("s(wl(w1), s2)");
  EXPECT_EQ(kind_of([&] { train(cfg, sc.corpus.dataset, sc.res); }), ErrorKind::parse);
  Resources partial = sc.res;
  SentenceEmbeddingStore s(12);
  s.add("p0", sc.corpus.dataset.posts[0].sentences.size(),
        std::vector<float>(sc.corpus.dataset.posts[0].sentences.size() * 12, 0.0f));
  partial.sentence.insert_or_assign("s1", s);
  EXPECT_EQ(kind_of([&] { train(small_run(), sc.corpus.dataset, partial); }), ErrorKind::coverage);
  auto bad = small_run();
  bad.epochs = 0;
  EXPECT_EQ(kind_of([&] { train(bad, sc.corpus.dataset, sc.res); }), ErrorKind::config);
}

TEST(Training, PowersetLossRoundTrip) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.model.loss = LossKind::lp_ce;
  cfg.epochs = 1;
  QuietWarnings quiet;
  auto r = train(cfg, sc.corpus.dataset, sc.res);
  auto& a = r.runs[0].artifact;
  ASSERT_TRUE(a.powerset);
  EXPECT_EQ(a.outputs, a.powerset->num_classes());
  auto b = decode_artifact(encode_artifact(a));
  ASSERT_TRUE(b.powerset);
  EXPECT_EQ(b.powerset->combos, a.powerset->combos);
  auto preds = predict(b, {sc.corpus.dataset.posts[0]}, sc.res.sources());
  EXPECT_TRUE(b.powerset->find(preds[0].labels));
}

TEST(Evaluate, SchemaMismatchIsExplicit) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.epochs = 1;
  QuietWarnings quiet;
  auto r = train(cfg, sc.corpus.dataset, sc.res);
  Dataset other = sc.corpus.dataset;
  other.schema = LabelSchema::parse("A\nB\n");
  EXPECT_EQ(kind_of([&] { evaluate(r.runs[0].artifact, other, sc.res.sources()); }),
            ErrorKind::schema);
  auto rep = evaluate(r.runs[0].artifact, sc.corpus.dataset, sc.res.sources());
  EXPECT_FALSE(rep.by_label_count.empty());
}

TEST(Evaluate, ConvergedModelFitsItsTrainingData) {
  SmallCorpus sc(400);
  auto cfg = small_run();
  cfg.model.lstm_dim = 16;
  cfg.model.attn_dim = 16;
  cfg.epochs = 20;
  cfg.model.dropout = 0.0;
  auto arch = parse_arch(cfg.arch, sc.res.catalog());
  QuietWarnings quiet;
  auto a = train_model(arch, cfg.resolved_model(arch), cfg, sc.corpus.dataset.posts, sc.res,
                       sc.corpus.dataset.schema, 1);
  EXPECT_GE(evaluate(a, sc.corpus.dataset, sc.res.sources()).f_i, 0.95);
}

TEST(Explain, TopTwoWordsPerSentence) {
  auto& sc = shared_corpus();
  auto cfg = small_run();
  cfg.epochs = 1;
  QuietWarnings quiet;
  auto r = train(cfg, sc.corpus.dataset, sc.res);
  std::vector<Post> posts(sc.corpus.dataset.posts.begin(), sc.corpus.dataset.posts.begin() + 10);
  auto ex = explain_posts(r.runs[0].artifact, posts, sc.res.sources(), 2);
  ASSERT_EQ(ex.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    ASSERT_EQ(ex[i].id, posts[i].id);
    const std::size_t S = std::min<std::size_t>(posts[i].sentences.size(), 8);
    ASSERT_EQ(ex[i].top_words.size(), S);
    for (std::size_t s = 0; s < S; ++s)
      EXPECT_EQ(ex[i].top_words[s].size(), std::min<std::size_t>(2, posts[i].sentences[s].size()));
  }
}
