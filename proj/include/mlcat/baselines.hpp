#pragma once

// Problem-transformation baselines: Label Powerset and Binary Relevance over
// logistic regression, with TF-IDF and averaged-embedding featurizers.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlcat/embeddings.hpp"
#include "mlcat/label_matrix.hpp"
#include "mlcat/optim.hpp"
#include "mlcat/text.hpp"

namespace mlcat {

// ---------------------------------------------------------------- powerset

struct PowersetMapping {
  std::vector<LabelSet> combos;  // class id -> label set
  std::map<LabelSet, std::size_t> index;

  std::size_t num_classes() const { return combos.size(); }
  std::optional<std::size_t> find(const LabelSet& s) const {
    auto it = index.find(s);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
};

struct PowersetEncoding {
  std::vector<std::size_t> ids;
  PowersetMapping mapping;
};

// Ids follow first appearance.
inline PowersetEncoding lp_encode(const std::vector<LabelSet>& sets) {
  if (sets.empty()) throw Error(ErrorKind::empty_input, "lp_encode: no label sets");
  PowersetEncoding enc;
  for (auto& s : sets) {
    if (s.empty()) throw Error(ErrorKind::invalid_target, "lp_encode: empty label set");
    auto [it, inserted] = enc.mapping.index.emplace(s, enc.mapping.combos.size());
    if (inserted) enc.mapping.combos.push_back(s);
    enc.ids.push_back(it->second);
  }
  return enc;
}

inline const LabelSet& lp_decode(std::size_t id, const PowersetMapping& m) {
  if (id >= m.combos.size())
    throw Error(ErrorKind::mapping, "lp_decode: class id " + std::to_string(id) +
                                        " outside " + std::to_string(m.combos.size()) +
                                        " powerset classes");
  return m.combos[id];
}

// ---------------------------------------------------------- sparse features

// Compressed sparse rows.
struct SparseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> indptr{0};
  std::vector<std::size_t> indices;
  std::vector<double> values;

  void add_row(const std::vector<std::pair<std::size_t, double>>& entries) {
    for (auto& [c, v] : entries) {
      if (c >= cols) throw Error(ErrorKind::dimension, "sparse column out of range");
      indices.push_back(c);
      values.push_back(v);
    }
    indptr.push_back(indices.size());
    ++rows;
  }

  static SparseMatrix from_dense(const std::vector<std::vector<double>>& dense) {
    SparseMatrix m;
    m.cols = dense.empty() ? 0 : dense[0].size();
    for (auto& r : dense) {
      if (r.size() != m.cols) throw Error(ErrorKind::dimension, "ragged dense rows");
      std::vector<std::pair<std::size_t, double>> e;
      for (std::size_t c = 0; c < r.size(); ++c)
        if (r[c] != 0.0) e.emplace_back(c, r[c]);
      m.add_row(e);
    }
    return m;
  }

  double row_norm(std::size_t r) const {
    double s = 0;
    for (auto k = indptr[r]; k < indptr[r + 1]; ++k) s += values[k] * values[k];
    return std::sqrt(s);
  }

  SparseMatrix select_rows(const std::vector<std::size_t>& rows_wanted) const {
    SparseMatrix m;
    m.cols = cols;
    for (auto r : rows_wanted) {
      std::vector<std::pair<std::size_t, double>> e;
      for (auto k = indptr.at(r); k < indptr[r + 1]; ++k) e.emplace_back(indices[k], values[k]);
      m.add_row(e);
    }
    return m;
  }
};

// ------------------------------------------------------------------ tf-idf

enum class NgramMode { word, chars };

inline constexpr std::size_t kTfidfMaxFeatures = 10000;

namespace detail {

inline std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '.' || c == '!' || c == '?' || c == '\t' || c == '\n') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> ngrams(const std::string& text, NgramMode mode) {
  std::vector<std::string> units;
  std::string sep;
  if (mode == NgramMode::word) {
    units = word_tokens(text);
    sep = " ";
  } else {
    for (std::size_t i = 0; i < text.size();) {
      const std::size_t start = i;
      next_code_point(text, i);
      units.push_back(text.substr(start, i - start));
    }
  }
  const std::size_t lo = 1, hi = mode == NgramMode::word ? 2 : 5;
  std::vector<std::string> out;
  for (std::size_t n = lo; n <= hi; ++n)
    for (std::size_t i = 0; i + n <= units.size(); ++i) {
      std::string g = units[i];
      for (std::size_t k = 1; k < n; ++k) g += sep + units[i + k];
      out.push_back(std::move(g));
    }
  return out;
}

}  // namespace detail

// tf = raw count, idf = ln((1 + n) / (1 + df)) + 1, rows L2-normalized.
// Features are the `max_features` most frequent n-grams of the fitting
// corpus (ties broken lexicographically), indexed in lexicographic order.
class TfidfVocab {
 public:
  TfidfVocab() = default;

  static TfidfVocab fit(const std::vector<std::string>& texts, NgramMode mode,
                        std::size_t max_features = kTfidfMaxFeatures) {
    if (texts.empty()) throw Error(ErrorKind::empty_input, "tfidf: empty corpus");
    std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // freq, df
    for (auto& t : texts) {
      std::map<std::string, std::size_t> counts;
      for (auto& g : detail::ngrams(t, mode)) ++counts[g];
      for (auto& [g, c] : counts) {
        auto& s = stats[g];
        s.first += c;
        s.second += 1;
      }
    }
    if (stats.empty()) throw Error(ErrorKind::empty_input, "tfidf: empty vocabulary");
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(stats.begin(),
                                                                                    stats.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](auto& a, auto& b) { return a.second.first > b.second.first; });
    if (ranked.size() > max_features) ranked.resize(max_features);
    std::sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first < b.first; });
    TfidfVocab v;
    v.mode_ = mode;
    const double n = static_cast<double>(texts.size());
    for (auto& [g, s] : ranked) {
      v.index_.emplace(g, v.features_.size());
      v.features_.push_back(g);
      v.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(s.second))) + 1.0);
    }
    return v;
  }

  NgramMode mode() const { return mode_; }
  std::size_t size() const { return features_.size(); }
  const std::vector<std::string>& features() const { return features_; }
  const std::vector<double>& idf() const { return idf_; }
  std::optional<std::size_t> find(const std::string& g) const {
    auto it = index_.find(g);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  SparseMatrix transform(const std::vector<std::string>& texts) const {
    if (features_.empty()) throw Error(ErrorKind::empty_input, "tfidf: empty vocabulary");
    SparseMatrix m;
    m.cols = features_.size();
    for (auto& t : texts) {
      std::map<std::size_t, double> row;
      for (auto& g : detail::ngrams(t, mode_))
        if (auto it = index_.find(g); it != index_.end()) row[it->second] += 1.0;
      double norm = 0;
      for (auto& [c, v] : row) {
        v *= idf_[c];
        norm += v * v;
      }
      norm = std::sqrt(norm);
      std::vector<std::pair<std::size_t, double>> e;
      for (auto& [c, v] : row) e.emplace_back(c, norm > 0 ? v / norm : 0.0);
      m.add_row(e);
    }
    return m;
  }

 private:
  NgramMode mode_ = NgramMode::word;
  std::vector<std::string> features_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Mean of the tokens' vectors; unknown tokens contribute zero vectors.
inline std::vector<double> avg_word_embedding(const std::vector<std::string>& tokens,
                                              const EmbeddingTable& table) {
  if (tokens.empty()) throw Error(ErrorKind::empty_input, "avg_word_embedding: no tokens");
  std::vector<double> out(table.dim(), 0.0);
  for (auto& t : tokens) {
    auto v = table.lookup(t);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
  }
  for (auto& x : out) x /= static_cast<double>(tokens.size());
  return out;
}

// ----------------------------------------------------- logistic regression

enum class LogRegMode { binary, multiclass };

inline constexpr double kLogRegEps = 1e-12;

struct LogRegConfig {
  std::size_t epochs = 300;  // full-batch steps
  double lr = 0.05;
  bool class_weighting = true;
};

// One dense layer: sigmoid over a single logit (binary) or softmax over K.
struct LogReg {
  LogRegMode mode = LogRegMode::binary;
  std::size_t features = 0, outputs = 0;
  std::vector<double> weight;  // [features x outputs]
  std::vector<double> bias;    // [outputs]
  std::vector<double> loss_trace;

  std::vector<double> logits(const SparseMatrix& x, std::size_t r) const {
    std::vector<double> z(bias);
    for (auto k = x.indptr[r]; k < x.indptr[r + 1]; ++k)
      for (std::size_t o = 0; o < outputs; ++o)
        z[o] += x.values[k] * weight[x.indices[k] * outputs + o];
    return z;
  }

  // P(positive) for binary, class distribution for multiclass.
  std::vector<double> predict_proba(const SparseMatrix& x, std::size_t r) const {
    auto z = logits(x, r);
    if (mode == LogRegMode::binary) return {1.0 / (1.0 + std::exp(-z[0]))};
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (auto& v : z) s += (v = std::exp(v - mx));
    for (auto& v : z) v /= s;
    return z;
  }

  std::size_t predict(const SparseMatrix& x, std::size_t r) const {
    auto p = predict_proba(x, r);
    if (mode == LogRegMode::binary) return p[0] >= 0.5 ? 1 : 0;
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

// Binary targets are 0/1; multiclass targets are class ids < num_classes.
// Weights start at zero; gradients are computed on the sparse rows and
// applied with Adam.
inline LogReg logreg_train(const SparseMatrix& x, const std::vector<std::size_t>& y,
                           LogRegMode mode, std::size_t num_classes = 2,
                           const LogRegConfig& cfg = {}) {
  if (x.rows != y.size())
    throw Error(ErrorKind::dimension, "logreg: " + std::to_string(x.rows) + " rows vs " +
                                          std::to_string(y.size()) + " targets");
  if (x.rows == 0) throw Error(ErrorKind::empty_input, "logreg: no rows");
  for (double v : x.values)
    if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "logreg: non-finite feature");
  const std::size_t K = mode == LogRegMode::binary ? 2 : num_classes;
  std::vector<double> count(K, 0.0);
  for (auto c : y) {
    if (c >= K) throw Error(ErrorKind::invalid_target, "logreg: target out of range");
    count[c] += 1;
  }
  std::size_t present = 0;
  for (auto c : count) present += c > 0;
  if (mode == LogRegMode::multiclass && present < 2)
    throw Error(ErrorKind::invalid_target, "logreg: multiclass target has a single class");
  const double n = static_cast<double>(x.rows);
  std::vector<double> cw(K, 1.0);
  if (cfg.class_weighting)
    for (std::size_t c = 0; c < K; ++c)
      cw[c] = count[c] > 0 ? n / (static_cast<double>(present) * count[c]) : 0.0;

  LogReg m;
  m.mode = mode;
  m.features = x.cols;
  m.outputs = mode == LogRegMode::binary ? 1 : K;
  Tensor<double> w = Tensor<double>::zeros({x.cols, m.outputs}, true);
  Tensor<double> b = Tensor<double>::zeros({m.outputs}, true);
  Adam<double> opt({{"weight", &w}, {"bias", &b}}, AdamConfig{cfg.lr});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    m.weight.assign(w.data().begin(), w.data().end());
    m.bias.assign(b.data().begin(), b.data().end());
    opt.zero_grad();
    auto gw = w.mutable_grad();
    auto gb = b.mutable_grad();
    double loss = 0;
    for (std::size_t r = 0; r < x.rows; ++r) {
      auto p = m.predict_proba(x, r);
      const double wt = cw[y[r]] / n;
      std::vector<double> d(m.outputs);
      if (mode == LogRegMode::binary) {
        const double t = static_cast<double>(y[r]);
        const double pc = std::clamp(p[0], kLogRegEps, 1 - kLogRegEps);
        loss -= wt * (t * std::log(pc) + (1 - t) * std::log(1 - pc));
        d[0] = wt * (p[0] - t);
      } else {
        loss -= wt * std::log(std::max(p[y[r]], kLogRegEps));
        for (std::size_t o = 0; o < m.outputs; ++o) d[o] = wt * (p[o] - (o == y[r] ? 1.0 : 0.0));
      }
      for (std::size_t o = 0; o < m.outputs; ++o) gb[o] += d[o];
      for (auto k = x.indptr[r]; k < x.indptr[r + 1]; ++k)
        for (std::size_t o = 0; o < m.outputs; ++o)
          gw[x.indices[k] * m.outputs + o] += x.values[k] * d[o];
    }
    m.loss_trace.push_back(loss);
    opt.step();
  }
  m.weight.assign(w.data().begin(), w.data().end());
  m.bias.assign(b.data().begin(), b.data().end());
  return m;
}

// ------------------------------------------------------ binary relevance

struct BinaryRelevance {
  struct Member {
    std::optional<LogReg> model;  // empty when the label was constant
    bool constant_value = false;
  };
  std::vector<Member> members;  // one per label

  std::size_t num_models() const { return members.size(); }

  LabelSet predict(const SparseMatrix& x, std::size_t r) const {
    LabelSet out;
    for (std::size_t j = 0; j < members.size(); ++j) {
      const auto& m = members[j];
      const bool on = m.model ? m.model->predict(x, r) == 1 : m.constant_value;
      if (on) out.insert(j);
    }
    return out;
  }
};

inline BinaryRelevance br_train(const SparseMatrix& x, const LabelMatrix& y,
                                const LogRegConfig& cfg = {}) {
  if (x.rows != y.rows) throw Error(ErrorKind::dimension, "br_train: row count mismatch");
  BinaryRelevance br;
  for (std::size_t j = 0; j < y.labels; ++j) {
    std::vector<std::size_t> t(y.rows);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < y.rows; ++i) pos += (t[i] = y(i, j));
    BinaryRelevance::Member m;
    if (pos == 0 || pos == y.rows) {
      m.constant_value = pos == y.rows;
      warn("br_train: label " + std::to_string(j) + " is constant in training; predicting " +
           (m.constant_value ? "always positive" : "always negative"));
    } else {
      m.model = logreg_train(x, t, LogRegMode::binary, 2, cfg);
    }
    br.members.push_back(std::move(m));
  }
  return br;
}

// ---------------------------------------------------------- label powerset

struct LabelPowerset {
  PowersetMapping mapping;
  LogReg model;

  LabelSet predict(const SparseMatrix& x, std::size_t r) const {
    return lp_decode(model.predict(x, r), mapping);
  }
};

inline LabelPowerset lp_train(const SparseMatrix& x, const std::vector<LabelSet>& y,
                              const LogRegConfig& cfg = {}) {
  auto enc = lp_encode(y);
  LabelPowerset lp;
  lp.model = logreg_train(x, enc.ids, LogRegMode::multiclass, enc.mapping.num_classes(), cfg);
  lp.mapping = std::move(enc.mapping);
  return lp;
}

}  // namespace mlcat
