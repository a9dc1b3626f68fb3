#pragma once

// Training runs, evaluation, prediction and model persistence.

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlcat/baselines.hpp"
#include "mlcat/lexicon.hpp"
#include "mlcat/losses.hpp"
#include "mlcat/metrics.hpp"
#include "mlcat/model.hpp"
#include "mlcat/optim.hpp"

namespace mlcat {

// How probabilities become label sets.
enum class Predictor { sigmoid, maxgap, powerset };

inline std::string to_string(Predictor p) {
  switch (p) {
    case Predictor::sigmoid: return "sigmoid";
    case Predictor::maxgap: return "maxgap";
    case Predictor::powerset: return "powerset";
  }
  return "?";
}

inline Predictor parse_predictor(const std::string& s) {
  if (s == "sigmoid") return Predictor::sigmoid;
  if (s == "maxgap") return Predictor::maxgap;
  if (s == "powerset") return Predictor::powerset;
  throw Error(ErrorKind::config, "unknown predictor '" + s + "' (expected sigmoid, maxgap or powerset)");
}

inline Predictor default_predictor(LossKind k) {
  switch (k) {
    case LossKind::ebce: return Predictor::sigmoid;
    case LossKind::nce: return Predictor::maxgap;
    case LossKind::lp_ce: return Predictor::powerset;
  }
  return Predictor::sigmoid;
}

struct RunConfig {
  std::string arch;
  ModelConfig model;
  // Dimensions given explicitly; the others come from the architecture's
  // preset when one exists.
  bool lstm_dim_set = false, attn_dim_set = false, filters_set = false;
  AdamConfig adam;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::size_t runs = 3;
  std::uint64_t seed = 1;  // run r uses seed + r
  bool merge_validation = false;
  std::optional<Predictor> predictor;
  std::string data, schema, lexicons, out;
  std::map<std::string, std::string> embeddings;  // source id -> file

  void set(const std::string& key, const std::string& value);

  Predictor resolved_predictor() const { return predictor.value_or(default_predictor(model.loss)); }

  ModelConfig resolved_model(const ArchExpr& arch_expr) const {
    ModelConfig m = model;
    if (auto p = preset_for(arch_expr)) {
      if (!lstm_dim_set) m.lstm_dim = p->lstm_dim;
      if (!attn_dim_set) m.attn_dim = p->attn_dim;
      if (!filters_set) m.filters_per_kernel = p->filters_per_kernel;
    }
    return m;
  }

  void validate() const {
    model.validate();
    if (epochs == 0 || batch_size == 0 || runs == 0)
      throw Error(ErrorKind::config, "epochs, batch_size and runs must be positive");
    if (!(adam.lr > 0) || !(adam.eps > 0) || adam.beta1 < 0 || adam.beta1 >= 1 ||
        adam.beta2 < 0 || adam.beta2 >= 1)
      throw Error(ErrorKind::config, "invalid optimizer settings");
    const auto pr = resolved_predictor();
    if ((model.loss == LossKind::lp_ce) != (pr == Predictor::powerset))
      throw Error(ErrorKind::config, "predictor 'powerset' goes with loss 'lp_ce' and only with it");
  }
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw Error(ErrorKind::config, "'" + key + "' expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x))
    throw Error(ErrorKind::config, "'" + key + "' expects a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::config, "'" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "arch") arch = value;
  else if (key == "loss") model.loss = parse_loss(value);
  else if (key == "lstm_dim") model.lstm_dim = parse_size(key, value), lstm_dim_set = true;
  else if (key == "attn_dim") model.attn_dim = parse_size(key, value), attn_dim_set = true;
  else if (key == "filters_per_kernel") model.filters_per_kernel = parse_size(key, value), filters_set = true;
  else if (key == "max_sentences") model.max_sentences = parse_size(key, value);
  else if (key == "max_words") model.max_words = parse_size(key, value);
  else if (key == "dropout") model.dropout = parse_double(key, value);
  else if (key == "lr") adam.lr = parse_double(key, value);
  else if (key == "beta1") adam.beta1 = parse_double(key, value);
  else if (key == "beta2") adam.beta2 = parse_double(key, value);
  else if (key == "eps") adam.eps = parse_double(key, value);
  else if (key == "epochs") epochs = parse_size(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "runs") runs = parse_size(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "merge_validation") merge_validation = parse_bool(key, value);
  else if (key == "predictor") predictor = parse_predictor(value);
  else if (key == "data") data = value;
  else if (key == "schema") schema = value;
  else if (key == "lexicons") lexicons = value;
  else if (key == "out") out = value;
  else if (key.rfind("emb.", 0) == 0 && key.size() > 4) embeddings[key.substr(4)] = value;
  else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

// Line-oriented "key = value"; '#' starts a comment line. Word and sentence
// embedding files are given as "emb.<id> = <path>".
inline RunConfig parse_run_config(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::config, "config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(t.substr(0, eq));
    const auto value = detail::trim(t.substr(eq + 1));
    try {
      base.set(key, value);
    } catch (const Error& e) {
      throw Error(e.kind(), "config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

// ------------------------------------------------------------- resources

struct Resources {
  std::map<std::string, EmbeddingTable> word;
  std::map<std::string, SentenceEmbeddingStore> sentence;

  EmbeddingSources sources() const {
    EmbeddingSources s;
    for (auto& [k, v] : word) s.word[k] = &v;
    for (auto& [k, v] : sentence) s.sentence[k] = &v;
    return s;
  }

  SourceCatalog catalog() const {
    SourceCatalog c;
    for (auto& [k, v] : word) c.word_dims[k] = v.dim();
    for (auto& [k, v] : sentence) c.sentence_dims[k] = v.dim();
    return c;
  }

  // Only the sources an architecture refers to.
  EmbeddingSources sources_for(const ArchExpr& arch) const {
    EmbeddingSources s;
    for (auto* g : arch.groups())
      for (auto& name : g->sources)
        if (auto it = word.find(name); it != word.end()) s.word[name] = &it->second;
    for (auto& name : arch.sentence_sources())
      if (auto it = sentence.find(name); it != sentence.end()) s.sentence[name] = &it->second;
    return s;
  }
};

inline Resources load_resources(const std::map<std::string, std::string>& files) {
  Resources r;
  for (auto& [raw_id, path] : files) {
    std::string id;
    for (char c : raw_id) id += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (sniff_embedding_kind(path) == EmbeddingKind::word)
      r.word.insert_or_assign(id, load_word_embeddings(path));
    else
      r.sentence.insert_or_assign(id, load_sentence_embeddings(path));
  }
  return r;
}

inline bool uses_word_source(const ArchExpr& arch, const std::string& name) {
  for (auto* g : arch.groups())
    for (auto& s : g->sources)
      if (s == name) return true;
  return false;
}

// ------------------------------------------------------------- artifacts

struct ModelArtifact {
  std::string arch;
  ModelConfig config;
  Predictor predictor = Predictor::sigmoid;
  LabelSchema schema = LabelSchema::sexism();
  SourceCatalog dims;
  std::size_t outputs = 0;
  std::optional<PowersetMapping> powerset;
  std::optional<std::array<double, kScoredDims.size()>> ling_means;
  std::vector<double> epoch_losses;
  Model<float> model;
};

inline constexpr char kArtifactMagic[4] = {'M', 'L', 'C', 'M'};
inline constexpr std::uint32_t kArtifactVersion = 1;

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"lstm_dim", c.lstm_dim},         {"attn_dim", c.attn_dim},
          {"filters_per_kernel", c.filters_per_kernel},
          {"max_sentences", c.max_sentences}, {"max_words", c.max_words},
          {"dropout", c.dropout},           {"loss", to_string(c.loss)},
          {"seed", c.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.lstm_dim = j.at("lstm_dim").get<std::size_t>();
  c.attn_dim = j.at("attn_dim").get<std::size_t>();
  c.filters_per_kernel = j.at("filters_per_kernel").get<std::size_t>();
  c.max_sentences = j.at("max_sentences").get<std::size_t>();
  c.max_words = j.at("max_words").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.loss = parse_loss(j.at("loss").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace detail

// Layout: "MLCM", u32 version, u64 header length, JSON header, then for each
// parameter in header order its float32 values, little-endian.
inline std::vector<char> encode_artifact(const ModelArtifact& a) {
  Model<float> model = a.model;  // shares parameter storage
  auto params = model.params();
  nlohmann::json h;
  h["arch"] = a.arch;
  h["config"] = detail::config_to_json(a.config);
  h["predictor"] = to_string(a.predictor);
  h["schema"] = a.schema.to_text();
  h["word_dims"] = a.dims.word_dims;
  h["sentence_dims"] = a.dims.sentence_dims;
  h["outputs"] = a.outputs;
  if (a.powerset) {
    auto arr = nlohmann::json::array();
    for (auto& s : a.powerset->combos) arr.push_back(std::vector<std::size_t>(s.begin(), s.end()));
    h["powerset"] = arr;
  }
  if (a.ling_means) h["ling_means"] = *a.ling_means;
  h["epoch_losses"] = a.epoch_losses;
  auto plist = nlohmann::json::array();
  for (auto& [name, p] : params) plist.push_back({{"name", name}, {"shape", p->shape()}});
  h["params"] = plist;
  const std::string header = h.dump();

  detail::ByteWriter w;
  w.raw(kArtifactMagic, 4);
  w.le(kArtifactVersion);
  w.le(static_cast<std::uint64_t>(header.size()));
  w.raw(header.data(), header.size());
  for (auto& [name, p] : params)
    for (float v : p->data()) w.f32(v);
  return w.bytes();
}

inline ModelArtifact decode_artifact(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  if (r.bytes(4, "magic") != std::string(kArtifactMagic, 4))
    throw PositionedError(ErrorKind::format, 0, "not a model artifact (bad magic)");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kArtifactVersion)
    throw PositionedError(ErrorKind::format, 4,
                          "unsupported artifact version " + std::to_string(version));
  const auto hlen = r.le<std::uint64_t>("header length");
  const std::size_t hstart = r.offset();
  const std::string header = r.bytes(static_cast<std::size_t>(hlen), "header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw PositionedError(ErrorKind::format, hstart, std::string("artifact header: ") + e.what());
  }
  ModelArtifact a;
  try {
    a.arch = h.at("arch").get<std::string>();
    a.config = detail::config_from_json(h.at("config"));
    a.predictor = parse_predictor(h.at("predictor").get<std::string>());
    a.schema = LabelSchema::parse(h.at("schema").get<std::string>());
    a.dims.word_dims = h.at("word_dims").get<std::map<std::string, std::size_t>>();
    a.dims.sentence_dims = h.at("sentence_dims").get<std::map<std::string, std::size_t>>();
    a.outputs = h.at("outputs").get<std::size_t>();
    if (h.contains("powerset")) {
      PowersetMapping m;
      for (auto& combo : h["powerset"]) {
        auto v = combo.get<std::vector<std::size_t>>();
        m.index.emplace(LabelSet(v.begin(), v.end()), m.combos.size());
        m.combos.emplace_back(v.begin(), v.end());
      }
      a.powerset = std::move(m);
    }
    if (h.contains("ling_means"))
      a.ling_means = h["ling_means"].get<std::array<double, kScoredDims.size()>>();
    a.epoch_losses = h.at("epoch_losses").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw PositionedError(ErrorKind::format, hstart, std::string("artifact header: ") + e.what());
  }
  a.model = Model<float>(parse_arch(a.arch, a.dims), a.config, a.dims, a.outputs);
  auto params = a.model.params();
  const auto& plist = h.at("params");
  if (plist.size() != params.size())
    throw Error(ErrorKind::format, "artifact has " + std::to_string(plist.size()) +
                                       " parameters, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    if (plist[i].at("name").get<std::string>() != name ||
        plist[i].at("shape").get<Shape>() != p->shape())
      throw Error(ErrorKind::format, "artifact parameter " + std::to_string(i) + " does not match '" +
                                         name + "' " + shape_str(p->shape()));
    auto dst = p->data();
    for (auto& v : dst) v = r.f32(name.c_str());
  }
  if (!r.at_end())
    throw PositionedError(ErrorKind::format, r.offset(), "trailing bytes after artifact");
  return a;
}

inline void save_artifact(const ModelArtifact& a, const std::string& path) {
  auto bytes = encode_artifact(a);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

inline ModelArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_artifact(std::move(bytes));
}

// ------------------------------------------------------------- inference

struct Prediction {
  std::string id;
  LabelSet labels;
  std::vector<double> probs;
};

inline LabelSet decode_prediction(const ModelArtifact& a, std::span<const float> probs) {
  switch (a.predictor) {
    case Predictor::sigmoid: return predict_sigmoid(probs);
    case Predictor::maxgap: return predict_maxgap(probs);
    case Predictor::powerset: {
      if (!a.powerset) throw Error(ErrorKind::mapping, "artifact has no powerset mapping");
      const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) -
                                                 probs.begin());
      return lp_decode(best, *a.powerset);
    }
  }
  return {};
}

// Builds the "ling" word source for `posts` from the artifact's stored means.
inline void attach_ling_source(const ModelArtifact& a, Resources& res, const std::vector<Post>& posts,
                               const std::string& lexicon_dir) {
  if (!a.ling_means) return;
  if (lexicon_dir.empty())
    throw Error(ErrorKind::config, "model uses the 'ling' source; pass a lexicon directory");
  LexiconSet lex = load_lexicons(lexicon_dir);
  lex.means = *a.ling_means;
  res.word.insert_or_assign(kLingSource, build_ling_source(posts, lex));
}

inline void check_sources(const ModelArtifact& a, const EmbeddingSources& src) {
  for (auto& [name, d] : a.dims.word_dims) {
    auto it = src.word.find(name);
    if (it == src.word.end())
      throw Error(ErrorKind::config, "missing word embeddings '" + name + "'");
    if (it->second->dim() != d)
      throw Error(ErrorKind::config, "word embeddings '" + name + "' have dim " +
                                         std::to_string(it->second->dim()) + ", model expects " +
                                         std::to_string(d));
  }
  for (auto& [name, d] : a.dims.sentence_dims) {
    auto it = src.sentence.find(name);
    if (it == src.sentence.end())
      throw Error(ErrorKind::config, "missing sentence embeddings '" + name + "'");
    if (it->second->dim() != d)
      throw Error(ErrorKind::config, "sentence embeddings '" + name + "' have dim " +
                                         std::to_string(it->second->dim()) + ", model expects " +
                                         std::to_string(d));
  }
}

// Restricts sources to the ones the artifact was built with.
inline EmbeddingSources artifact_sources(const ModelArtifact& a, const EmbeddingSources& all) {
  EmbeddingSources s;
  for (auto& [name, d] : a.dims.word_dims)
    if (auto it = all.word.find(name); it != all.word.end()) s.word[name] = it->second;
  for (auto& [name, d] : a.dims.sentence_dims)
    if (auto it = all.sentence.find(name); it != all.sentence.end()) s.sentence[name] = it->second;
  check_sources(a, s);
  return s;
}

inline constexpr std::size_t kInferenceBatch = 64;

inline std::vector<Prediction> predict(const ModelArtifact& a, const std::vector<Post>& posts,
                                       const EmbeddingSources& all_sources) {
  const auto src = artifact_sources(a, all_sources);
  std::vector<Prediction> out;
  BatchStream stream(posts, src, a.config.geometry(), a.schema.coarse_size(), kInferenceBatch, 0, 0,
                     false);
  while (auto batch = stream.next()) {
    auto res = a.model.forward(*batch);
    const std::size_t K = res.probs.dim(1);
    for (std::size_t b = 0; b < batch->size; ++b) {
      std::span<const float> row(res.probs.data().data() + b * K, K);
      out.push_back({batch->ids[b], decode_prediction(a, row), {row.begin(), row.end()}});
    }
  }
  return out;
}

inline MetricsReport evaluate(const ModelArtifact& a, const std::vector<Post>& posts,
                              const EmbeddingSources& sources) {
  auto preds = predict(a, posts, sources);
  std::vector<LabelSet> p, g;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    p.push_back(preds[i].labels);
    g.push_back(posts[i].labels);
  }
  return evaluate_predictions(p, g, a.schema.coarse_size());
}

inline MetricsReport evaluate(const ModelArtifact& a, const Dataset& ds,
                              const EmbeddingSources& sources) {
  if (!(a.schema == ds.schema))
    throw Error(ErrorKind::schema, "dataset label schema differs from the model's schema");
  return evaluate(a, ds.posts, sources);
}

inline std::vector<PostExplanation> explain_posts(const ModelArtifact& a, const std::vector<Post>& posts,
                                                  const EmbeddingSources& all_sources, std::size_t k) {
  const auto src = artifact_sources(a, all_sources);
  std::vector<PostExplanation> out;
  BatchStream stream(posts, src, a.config.geometry(), a.schema.coarse_size(), kInferenceBatch, 0, 0,
                     false);
  while (auto batch = stream.next()) {
    auto res = a.model.forward(*batch);
    for (auto& e : explain(res.trace, *batch, k)) out.push_back(std::move(e));
  }
  return out;
}

// -------------------------------------------------------------- training

struct TrainOptions {
  std::ostream* log = nullptr;  // per-epoch progress
};

struct RunResult {
  std::uint64_t seed = 0;
  ModelArtifact artifact;
  MetricsReport report;
};

struct TrainResult {
  std::vector<RunResult> runs;
  MetricsReport average;
};

// Trains one model on `train_posts`. `schema` fixes the label space.
inline ModelArtifact train_model(const ArchExpr& arch, const ModelConfig& mcfg, const RunConfig& cfg,
                                 const std::vector<Post>& train_posts, const Resources& res,
                                 const LabelSchema& schema, std::uint64_t seed,
                                 const TrainOptions& opts = {}) {
  if (train_posts.empty()) throw Error(ErrorKind::empty_input, "no training posts");
  const auto src = res.sources_for(arch);
  check_coverage(train_posts, src);
  const std::size_t L = schema.coarse_size();

  ModelArtifact a;
  a.arch = render(arch);
  a.config = mcfg;
  a.config.seed = seed;
  a.predictor = cfg.resolved_predictor();
  a.schema = schema;
  for (auto& [name, t] : src.word) a.dims.word_dims[name] = t->dim();
  for (auto& [name, s] : src.sentence) a.dims.sentence_dims[name] = s->dim();

  std::vector<LabelSet> train_sets;
  for (auto& p : train_posts) train_sets.push_back(p.labels);
  const auto ymat = LabelMatrix::from_sets(train_sets, L);
  std::optional<EbceWeights> ebce_w;
  std::optional<NceWeights> nce_w;
  std::map<LabelSet, std::size_t> combo_of;
  switch (mcfg.loss) {
    case LossKind::ebce:
      ebce_w = ebce_weights(ymat);
      a.outputs = L;
      break;
    case LossKind::nce:
      nce_w = nce_weights(ymat);
      a.outputs = L;
      break;
    case LossKind::lp_ce:
      a.powerset = lp_encode(train_sets).mapping;
      a.outputs = a.powerset->num_classes();
      break;
  }
  a.model = Model<float>(arch, a.config, a.dims, a.outputs);
  Adam<float> opt(a.model.params(), cfg.adam);
  Rng dropout_rng(seed ^ 0x9e3779b97f4a7c15ull);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    BatchStream stream(train_posts, src, a.config.geometry(), L, cfg.batch_size, seed, epoch, true);
    double total = 0;
    std::size_t seen = 0;
    while (auto batch = stream.next()) {
      auto fwd = a.model.forward(*batch, true, dropout_rng);
      Tensor<float> loss;
      if (ebce_w) {
        loss = ebce_loss(fwd.probs, batch->label_matrix(), *ebce_w);
      } else if (nce_w) {
        loss = nce_loss(fwd.probs, batch->label_matrix(), *nce_w);
      } else {
        std::vector<std::size_t> target;
        for (auto& s : batch->labels) target.push_back(a.powerset->index.at(s));
        loss = cross_entropy(fwd.probs, target);
      }
      opt.zero_grad();
      backward(loss);
      opt.step();
      total += static_cast<double>(loss.item()) * static_cast<double>(batch->size);
      seen += batch->size;
    }
    a.epoch_losses.push_back(total / static_cast<double>(seen));
    if (opts.log)
      *opts.log << "seed " << seed << " epoch " << epoch + 1 << "/" << cfg.epochs
                << " loss " << a.epoch_losses.back() << '\n';
  }
  return a;
}

// Full experiment: split, train `runs` models with seeds seed, seed+1, ...,
// score each on the test split and average. Adds the "ling" source from the
// lexicon directory when the architecture refers to it and no file provides
// it.
inline TrainResult train(const RunConfig& cfg, const Dataset& ds, Resources res,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  if (cfg.arch.empty()) throw Error(ErrorKind::config, "no architecture given");
  auto split = split_dataset(ds.posts, cfg.seed);
  auto train_posts = split.train;
  if (cfg.merge_validation)
    train_posts.insert(train_posts.end(), split.validation.begin(), split.validation.end());

  const ArchExpr syntax = parse_arch(cfg.arch);
  std::optional<std::array<double, kScoredDims.size()>> ling_means;
  if (uses_word_source(syntax, kLingSource) && !res.word.count(kLingSource)) {
    const std::string dir = cfg.lexicons.empty() ? lexicon_dir_from_env() : cfg.lexicons;
    if (dir.empty())
      throw Error(ErrorKind::config, "architecture uses 'ling' but no lexicon directory was given");
    LexiconSet lex = load_lexicons(dir);
    lex.fit_means(vocabulary(train_posts));
    res.word.insert_or_assign(kLingSource, build_ling_source(ds.posts, lex));
    ling_means = lex.means;
  }
  const ArchExpr arch = parse_arch(cfg.arch, res.catalog());
  const ModelConfig mcfg = cfg.resolved_model(arch);
  mcfg.validate();
  check_coverage(ds.posts, res.sources_for(arch));

  TrainResult out;
  std::vector<MetricsReport> reports;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    RunResult run;
    run.seed = cfg.seed + r;
    run.artifact = train_model(arch, mcfg, cfg, train_posts, res, ds.schema, run.seed, opts);
    run.artifact.ling_means = ling_means;
    run.report = evaluate(run.artifact, split.test, res.sources());
    reports.push_back(run.report);
    out.runs.push_back(std::move(run));
  }
  out.average = average_reports(reports);
  return out;
}

}  // namespace mlcat
