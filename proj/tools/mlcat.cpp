// mlcat command line: train, eval, predict, explain, kappa, baseline, synth.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "mlcat/baselines.hpp"
#include "mlcat/synthetic.hpp"
#include "mlcat/trainer.hpp"

using namespace mlcat;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config, arch, data, lexicons, loss, out, model;
  std::vector<std::string> emb, set;
  std::optional<std::size_t> runs, seed;
  bool json = false;
};

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorKind::config, std::string(flag) + " expects key=value, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// Config file first, then --set overrides, then the dedicated flags.
RunConfig run_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  for (auto& kv : c.set) {
    auto [k, v] = split_assignment(kv, "--set");
    cfg.set(k, v);
  }
  for (auto& kv : c.emb) {
    auto [k, v] = split_assignment(kv, "--emb");
    cfg.set("emb." + k, v);
  }
  if (!c.arch.empty()) cfg.set("arch", c.arch);
  if (!c.data.empty()) cfg.set("data", c.data);
  if (!c.lexicons.empty()) cfg.set("lexicons", c.lexicons);
  if (!c.loss.empty()) cfg.set("loss", c.loss);
  if (!c.out.empty()) cfg.set("out", c.out);
  if (c.runs) cfg.set("runs", std::to_string(*c.runs));
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> emb_files(const Common& c) {
  std::map<std::string, std::string> files;
  for (auto& kv : c.emb) {
    auto [k, v] = split_assignment(kv, "--emb");
    files[k] = v;
  }
  return files;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::config, std::string("missing ") + flag);
}

void print_report(const MetricsReport& r, const LabelSchema& schema, bool json) {
  if (json) std::cout << to_json(r, schema.coarse()).dump(2) << '\n';
  else std::cout << to_key_value(r, schema.coarse());
}

// ------------------------------------------------------------- commands

int cmd_train(const Common& c) {
  const RunConfig cfg = run_config(c);
  require(cfg.data, "--data");
  auto ds = load_dataset(cfg.data);
  auto res = load_resources(cfg.embeddings);
  auto result = train(cfg, ds, std::move(res), TrainOptions{&std::cerr});
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    for (std::size_t r = 0; r < result.runs.size(); ++r)
      save_artifact(result.runs[r].artifact, (fs::path(cfg.out) / ("run" + std::to_string(r) + ".mlcm")).string());
    std::ofstream(fs::path(cfg.out) / "report.json") << to_json(result.average, ds.schema.coarse()).dump(2)
                                                     << '\n';
  }
  for (auto& run : result.runs)
    std::cout << "run seed=" << run.seed << " F_I=" << run.report.f_i << " F_micro=" << run.report.f_micro
              << '\n';
  print_report(result.average, ds.schema, c.json);
  return 0;
}

struct Loaded {
  ModelArtifact artifact;
  Resources res;
};

Loaded load_model(const Common& c, const std::vector<Post>& posts) {
  require(c.model, "--model");
  Loaded l{load_artifact(c.model), load_resources(emb_files(c))};
  const std::string lex = c.lexicons.empty() ? lexicon_dir_from_env() : c.lexicons;
  attach_ling_source(l.artifact, l.res, posts, lex);
  return l;
}

int cmd_eval(const Common& c) {
  require(c.data, "--data");
  auto ds = load_dataset(c.data);
  auto l = load_model(c, ds.posts);
  print_report(evaluate(l.artifact, ds, l.res.sources()), ds.schema, c.json);
  return 0;
}

int cmd_predict(const Common& c) {
  require(c.data, "--data");
  auto posts = load_texts(c.data);
  auto l = load_model(c, posts);
  const auto& names = l.artifact.schema.coarse();
  for (auto& p : predict(l.artifact, posts, l.res.sources())) {
    std::cout << p.id << '\t';
    bool first = true;
    for (auto j : p.labels) {
      std::cout << (first ? "" : ";") << names[j];
      first = false;
    }
    std::cout << '\t' << std::setprecision(9);
    for (std::size_t j = 0; j < p.probs.size(); ++j) std::cout << (j ? " " : "") << p.probs[j];
    std::cout << '\n';
  }
  return 0;
}

int cmd_explain(const Common& c, std::size_t k) {
  require(c.data, "--data");
  auto posts = load_texts(c.data);
  auto l = load_model(c, posts);
  auto ex = explain_posts(l.artifact, posts, l.res.sources(), k);
  std::cout << std::fixed << std::setprecision(4);
  for (auto& e : ex) {
    std::cout << "post " << e.id << '\n';
    for (auto s : e.sentence_ranking) {
      std::cout << "  sentence " << s << " (" << e.sentence_weights[s] << "):";
      for (auto& w : e.top_words[s]) std::cout << ' ' << w.word << " (" << w.score << ')';
      std::cout << '\n';
    }
  }
  return 0;
}

// Agreement between two annotation files over the posts they share.
int cmd_kappa(const std::string& a_path, const std::string& b_path) {
  auto a = load_dataset(a_path), b = load_dataset(b_path);
  std::map<std::string, const Post*> by_id;
  for (auto& p : b.posts) by_id[p.id] = &p;
  std::vector<LabelSet> x, y;
  for (auto& p : a.posts)
    if (auto it = by_id.find(p.id); it != by_id.end()) {
      x.push_back(p.labels);
      y.push_back(it->second->labels);
    }
  if (x.empty()) throw Error(ErrorKind::empty_input, "the two files share no post ids");
  std::vector<double> per;
  const double mean = mean_category_kappa(x, y, a.schema.coarse_size(), &per);
  std::cout << std::fixed << std::setprecision(6) << "posts=" << x.size() << "\nkappa=" << mean << '\n';
  for (std::size_t l = 0; l < per.size(); ++l)
    std::cout << "kappa[" << a.schema.coarse()[l] << "]=" << per[l] << '\n';
  return 0;
}

int cmd_baseline(const Common& c, const std::string& method, const std::string& features,
                 std::size_t epochs) {
  require(c.data, "--data");
  auto ds = load_dataset(c.data);
  const std::uint64_t seed = c.seed.value_or(1);
  auto split = split_dataset(ds.posts, seed);
  split.train.insert(split.train.end(), split.validation.begin(), split.validation.end());

  std::function<SparseMatrix(const std::vector<Post>&)> featurize;
  if (features == "tfidf-word" || features == "tfidf-char") {
    std::vector<std::string> texts;
    for (auto& p : split.train) texts.push_back(p.text);
    auto vocab = std::make_shared<TfidfVocab>(
        TfidfVocab::fit(texts, features == "tfidf-word" ? NgramMode::word : NgramMode::chars));
    featurize = [vocab](const std::vector<Post>& posts) {
      std::vector<std::string> t;
      for (auto& p : posts) t.push_back(p.text);
      return vocab->transform(t);
    };
  } else if (features == "avg") {
    auto res = std::make_shared<Resources>(load_resources(emb_files(c)));
    if (res->word.size() != 1)
      throw Error(ErrorKind::config, "avg features need exactly one word embedding file via --emb");
    featurize = [res](const std::vector<Post>& posts) {
      std::vector<std::vector<double>> dense;
      for (auto& p : posts) {
        std::vector<std::string> tokens;
        for (auto& s : p.sentences) tokens.insert(tokens.end(), s.begin(), s.end());
        dense.push_back(avg_word_embedding(tokens, res->word.begin()->second));
      }
      return SparseMatrix::from_dense(dense);
    };
  } else {
    throw Error(ErrorKind::config, "unknown features '" + features + "' (tfidf-word, tfidf-char, avg)");
  }

  const auto xtr = featurize(split.train), xte = featurize(split.test);
  LogRegConfig lcfg;
  lcfg.epochs = epochs;
  std::vector<LabelSet> pred, gold;
  for (auto& p : split.test) gold.push_back(p.labels);
  if (method == "lp") {
    std::vector<LabelSet> y;
    for (auto& p : split.train) y.push_back(p.labels);
    auto lp = lp_train(xtr, y, lcfg);
    for (std::size_t r = 0; r < xte.rows; ++r) pred.push_back(lp.predict(xte, r));
  } else if (method == "br") {
    LabelMatrix y(split.train.size(), ds.num_labels());
    for (std::size_t i = 0; i < split.train.size(); ++i)
      for (auto l : split.train[i].labels) y(i, l) = 1;
    auto br = br_train(xtr, y, lcfg);
    for (std::size_t r = 0; r < xte.rows; ++r) pred.push_back(br.predict(xte, r));
  } else {
    throw Error(ErrorKind::config, "unknown method '" + method + "' (lp, br)");
  }
  print_report(evaluate_predictions(pred, gold, ds.num_labels()), ds.schema, c.json);
  return 0;
}

int cmd_synth(const std::string& out, const SyntheticSpec& spec) {
  require(out, "--out");
  auto corpus = make_synthetic_corpus(spec);
  fs::create_directories(out);
  save_dataset(corpus.dataset, (fs::path(out) / "data.tsv").string());
  save_word_embeddings(corpus.words, (fs::path(out) / "w1.wemb").string());
  save_sentence_embeddings(corpus.sentences, (fs::path(out) / "s1.semb").string());
  std::vector<Post> texts(corpus.dataset.posts.begin(),
                          corpus.dataset.posts.begin() + std::min<std::size_t>(20, spec.posts));
  std::ofstream t(fs::path(out) / "texts.tsv");
  for (auto& p : texts) t << p.id << '\t' << p.text << '\n';
  std::cout << "wrote " << spec.posts << " posts to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-label categorization of accounts of sexism"};
  app.require_subcommand(1);
  Common c;

  auto add_model_flags = [&](CLI::App* s) {
    s->add_option("--model", c.model, "Trained model file (.mlcm)")->required();
    s->add_option("--data", c.data, "Input file")->required();
    s->add_option("--emb", c.emb, "Embedding file as id=path (repeatable)");
    s->add_option("--lexicons", c.lexicons, "Lexicon directory for the ling source");
  };

  auto* train_cmd = app.add_subcommand("train", "Train and evaluate over several seeded runs");
  train_cmd->add_option("--config", c.config, "key = value run configuration");
  train_cmd->add_option("--arch", c.arch, "Architecture expression, e.g. \"s(wl(elmo), tbert)\"");
  train_cmd->add_option("--data", c.data, "Labeled dataset");
  train_cmd->add_option("--emb", c.emb, "Embedding file as id=path (repeatable)");
  train_cmd->add_option("--lexicons", c.lexicons, "Lexicon directory");
  train_cmd->add_option("--loss", c.loss, "ebce, nce or lp_ce");
  train_cmd->add_option("--runs", c.runs, "Number of runs");
  train_cmd->add_option("--seed", c.seed, "Base seed");
  train_cmd->add_option("--out", c.out, "Directory for model files and the averaged report");
  train_cmd->add_option("--set", c.set, "Override any config key as key=value (repeatable)");
  train_cmd->add_flag("--json", c.json, "Print the report as JSON");

  auto* eval_cmd = app.add_subcommand("eval", "Score a trained model on a labeled dataset");
  add_model_flags(eval_cmd);
  eval_cmd->add_flag("--json", c.json, "Print the report as JSON");

  auto* predict_cmd = app.add_subcommand("predict", "Label sets and probabilities for id<TAB>text lines");
  add_model_flags(predict_cmd);

  std::size_t top_k = 2;
  auto* explain_cmd = app.add_subcommand("explain", "Most attended words per sentence");
  add_model_flags(explain_cmd);
  explain_cmd->add_option("-k,--top", top_k, "Words per sentence")->check(CLI::PositiveNumber);

  std::string kappa_a, kappa_b;
  auto* kappa_cmd = app.add_subcommand("kappa", "Mean per-category Cohen's kappa of two annotation files");
  kappa_cmd->add_option("first", kappa_a)->required();
  kappa_cmd->add_option("second", kappa_b)->required();

  std::string method = "br", features = "tfidf-word";
  std::size_t lr_epochs = LogRegConfig{}.epochs;
  auto* base_cmd = app.add_subcommand("baseline", "Label powerset or binary relevance with logistic regression");
  base_cmd->add_option("--data", c.data, "Labeled dataset")->required();
  base_cmd->add_option("--method", method, "lp or br");
  base_cmd->add_option("--features", features, "tfidf-word, tfidf-char or avg");
  base_cmd->add_option("--emb", c.emb, "Word embedding file for avg features as id=path");
  base_cmd->add_option("--seed", c.seed, "Split seed");
  base_cmd->add_option("--epochs", lr_epochs, "Logistic regression steps");
  base_cmd->add_flag("--json", c.json, "Print the report as JSON");

  SyntheticSpec spec;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a keyword-generated corpus with random embeddings");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--posts", spec.posts);
  synth_cmd->add_option("--word-dim", spec.word_dim);
  synth_cmd->add_option("--sentence-dim", spec.sentence_dim);
  synth_cmd->add_option("--seed", spec.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(c);
    if (*eval_cmd) return cmd_eval(c);
    if (*predict_cmd) return cmd_predict(c);
    if (*explain_cmd) return cmd_explain(c, top_k);
    if (*kappa_cmd) return cmd_kappa(kappa_a, kappa_b);
    if (*base_cmd) return cmd_baseline(c, method, features, lr_epochs);
    if (*synth_cmd) return cmd_synth(synth_out, spec);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
