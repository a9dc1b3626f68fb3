#pragma once

// Two-level post classifier assembled from an architecture expression.
//
// Word level: every wl/wc group concatenates its word sources and encodes
// each sentence into one vector (biLSTM + attention, or the convolutional
// block). Sentence level: group outputs and sentence-encoder embeddings are
// concatenated per sentence, run through a post-level biLSTM + attention,
// and a dense layer maps the post vector to class probabilities.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlcat/arch.hpp"
#include "mlcat/batch.hpp"
#include "mlcat/layers.hpp"

namespace mlcat {

enum class LossKind { ebce, nce, lp_ce };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::ebce: return "ebce";
    case LossKind::nce: return "nce";
    case LossKind::lp_ce: return "lp_ce";
  }
  return "?";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "ebce") return LossKind::ebce;
  if (s == "nce") return LossKind::nce;
  if (s == "lp_ce") return LossKind::lp_ce;
  throw Error(ErrorKind::config, "unknown loss '" + s + "' (expected ebce, nce or lp_ce)");
}

struct ModelConfig {
  std::size_t lstm_dim = 300;  // per direction
  std::size_t attn_dim = 600;
  std::size_t filters_per_kernel = 100;
  std::size_t max_sentences = 8;
  std::size_t max_words = kMaxSentenceWords;
  double dropout = 0.25;
  LossKind loss = LossKind::ebce;
  std::uint64_t seed = 0;

  void validate() const {
    if (!lstm_dim || !attn_dim || !filters_per_kernel || !max_sentences || !max_words)
      throw Error(ErrorKind::config, "model dimensions must be positive");
    if (max_words > kMaxSentenceWords)
      throw Error(ErrorKind::config, "max_words cannot exceed " +
                                         std::to_string(kMaxSentenceWords));
    if (dropout < 0.0 || dropout >= 1.0)
      throw Error(ErrorKind::config, "dropout must be in [0,1)");
  }

  BatchGeometry geometry() const { return {max_sentences, max_words}; }
};

// Tuned dimensions shipped per architecture.
struct ArchPreset {
  std::size_t lstm_dim, attn_dim, filters_per_kernel;
};

inline std::optional<ArchPreset> preset_for(const ArchExpr& arch) {
  static const std::map<std::string, ArchPreset> presets = {
      {"s(wl(elmo))", {300, 400, 100}},
      {"s(wc(elmo))", {300, 400, 100}},
      {"s(bert)", {200, 500, 100}},
      {"s(use)", {300, 600, 100}},
      {"s(infersent)", {100, 200, 100}},
      {"s(tbert)", {300, 600, 100}},
      {"s(wl(elmo), tbert)", {300, 600, 100}},
      {"s(wl(elmo, glove), tbert)", {100, 100, 100}},
      {"s(wl(elmo), wl(glove), tbert)", {100, 200, 100}},
      {"s(wl(elmo), wl(glove), tbert, use)", {300, 600, 100}},
      {"s(wl(elmo), wl(glove), wl(ling), tbert)", {300, 600, 100}},
      {"s(wc(elmo), wc(glove), tbert)", {300, 600, 100}},
      {"s(wc(elmo), wl(elmo), wc(glove), wl(glove), tbert)", {300, 500, 100}},
  };
  auto it = presets.find(render(arch));
  if (it == presets.end()) return std::nullopt;
  return it->second;
}

// Attention weights from one forward pass.
struct AttentionTrace {
  std::vector<std::string> groups;  // rendered wl groups, in model order
  // word[g][b][s][w]: weight of word w in sentence s of post b under group g
  std::vector<std::vector<std::vector<std::vector<double>>>> word;
  // sentence[b][s]
  std::vector<std::vector<double>> sentence;
};

template <class T>
struct ForwardResult {
  Tensor<T> probs;  // [B x outputs]
  AttentionTrace trace;
};

template <class T>
class Model {
 public:
  Model() = default;

  Model(ArchExpr arch, ModelConfig cfg, const SourceCatalog& dims, std::size_t outputs)
      : arch_(std::move(arch)), cfg_(cfg), outputs_(outputs) {
    cfg_.validate();
    validate(arch_, dims);
    if (outputs == 0) throw Error(ErrorKind::config, "model needs at least one output");
    Rng rng(cfg_.seed);
    sentence_width_ = 0;
    for (auto& item : arch_.items) {
      if (auto* g = std::get_if<WordGroup>(&item)) {
        Group grp;
        grp.spec = *g;
        for (auto& s : g->sources) {
          grp.source_widths.push_back(dims.word_dims.at(s));
          grp.input_width += grp.source_widths.back();
        }
        if (grp.input_width == 0)
          throw Error(ErrorKind::config, "zero-width word concatenation");
        if (g->kind == GroupKind::lstm) {
          grp.lstm = BiLstmLayer<T>(grp.input_width, cfg_.lstm_dim, rng);
          grp.attn = AttentionLayer<T>(grp.lstm.output_size(), cfg_.attn_dim, rng);
          grp.output_width = grp.lstm.output_size();
        } else {
          grp.conv = ConvBlock<T>(grp.input_width, cfg_.filters_per_kernel, rng);
          grp.output_width = grp.conv.output_size();
        }
        sentence_width_ += grp.output_width;
        groups_.push_back(std::move(grp));
      } else {
        auto& name = std::get<SentenceSource>(item).name;
        const std::size_t d = dims.sentence_dims.at(name);
        sentence_sources_.emplace_back(name, d);
        sentence_width_ += d;
      }
    }
    if (sentence_width_ == 0) throw Error(ErrorKind::config, "zero-width sentence concatenation");
    post_lstm_ = BiLstmLayer<T>(sentence_width_, cfg_.lstm_dim, rng);
    post_attn_ = AttentionLayer<T>(post_lstm_.output_size(), cfg_.attn_dim, rng);
    head_ = Dense<T>(post_lstm_.output_size(), outputs_, rng);
  }

  const ArchExpr& arch() const { return arch_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t outputs() const { return outputs_; }
  std::size_t sentence_width() const { return sentence_width_; }
  std::size_t post_width() const { return post_lstm_.output_size(); }

  // Width of each group's sentence vectors, in arch order.
  std::vector<std::size_t> group_widths() const {
    std::vector<std::size_t> out;
    for (auto& g : groups_) out.push_back(g.output_width);
    return out;
  }
  std::vector<std::size_t> group_input_widths() const {
    std::vector<std::size_t> out;
    for (auto& g : groups_) out.push_back(g.input_width);
    return out;
  }

  NamedParams<T> params() {
    NamedParams<T> out;
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      auto& g = groups_[i];
      const std::string p = "group" + std::to_string(i);
      if (g.spec.kind == GroupKind::lstm) {
        g.lstm.collect(p + ".lstm", out);
        g.attn.collect(p + ".attn", out);
      } else {
        g.conv.collect(p + ".conv", out);
      }
    }
    post_lstm_.collect("post.lstm", out);
    post_attn_.collect("post.attn", out);
    head_.collect("head", out);
    return out;
  }

  // Inference: no dropout.
  ForwardResult<T> forward(const PostBatch& batch) const {
    Rng unused(0);
    return run(batch, false, unused);
  }

  ForwardResult<T> forward(const PostBatch& batch, bool train, Rng& rng) const {
    return run(batch, train, rng);
  }

 private:
  struct Group {
    WordGroup spec;
    std::vector<std::size_t> source_widths;
    std::size_t input_width = 0, output_width = 0;
    BiLstmLayer<T> lstm;
    AttentionLayer<T> attn;
    ConvBlock<T> conv;
  };

  struct SentenceRef {
    std::size_t post, sentence, length;
  };

  ForwardResult<T> run(const PostBatch& batch, bool train, Rng& rng) const {
    const std::size_t B = batch.size, S = batch.max_sentences, W = batch.max_words;
    // valid sentences, post-major
    std::vector<SentenceRef> refs;
    std::vector<std::vector<std::ptrdiff_t>> slot(B, std::vector<std::ptrdiff_t>(S, -1));
    std::size_t steps_w = 1, steps_s = 1;
    for (std::size_t b = 0; b < B; ++b) {
      if (batch.num_sentences[b] == 0)
        throw Error(ErrorKind::empty_support, "post '" + batch.ids[b] + "' has no sentences");
      steps_s = std::max(steps_s, batch.num_sentences[b]);
      for (std::size_t s = 0; s < batch.num_sentences[b]; ++s) {
        const std::size_t len = batch.length(b, s);
        if (len == 0)
          throw Error(ErrorKind::degenerate_length,
                      "post '" + batch.ids[b] + "' has an empty sentence");
        slot[b][s] = static_cast<std::ptrdiff_t>(refs.size());
        refs.push_back({b, s, len});
        steps_w = std::max(steps_w, len);
      }
    }
    const std::size_t N = refs.size();
    std::vector<std::size_t> word_lengths(N);
    for (std::size_t i = 0; i < N; ++i) word_lengths[i] = refs[i].length;

    ForwardResult<T> result;
    auto& trace = result.trace;
    std::vector<Tensor<T>> parts;
    for (auto& g : groups_) {
      // gather the concatenated word vectors of every valid sentence
      std::vector<const Tensor<float>*> srcs;
      for (std::size_t k = 0; k < g.spec.sources.size(); ++k) {
        auto& name = g.spec.sources[k];
        auto it = batch.word.find(name);
        if (it == batch.word.end())
          throw Error(ErrorKind::dimension, "batch lacks word source '" + name + "'");
        if (it->second.dim(0) != B || it->second.dim(1) != S || it->second.dim(2) != W ||
            it->second.dim(3) != g.source_widths[k])
          throw Error(ErrorKind::dimension, "word source '" + name + "' has shape " +
                                                shape_str(it->second.shape()));
        srcs.push_back(&it->second);
      }
      const std::size_t D = g.input_width;
      const bool time_major = g.spec.kind == GroupKind::lstm;
      std::vector<T> x(steps_w * N * D, T(0));
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t t = 0; t < refs[i].length; ++t) {
          T* dst = x.data() + (time_major ? (t * N + i) : (i * steps_w + t)) * D;
          for (auto* src : srcs) {
            const std::size_t d = src->dim(3);
            const float* from =
                src->data().data() + ((refs[i].post * S + refs[i].sentence) * W + t) * d;
            for (std::size_t k = 0; k < d; ++k) *dst++ = static_cast<T>(from[k]);
          }
        }
      Shape shape = time_major ? Shape{steps_w, N, D} : Shape{N, steps_w, D};
      Tensor<T> input = dropout(Tensor<T>(shape, std::move(x)), cfg_.dropout, train, rng);
      if (time_major) {
        auto states = g.lstm.forward(input, word_lengths);
        auto att = g.attn.forward(states, word_lengths);
        parts.push_back(att.vec);
        trace.groups.push_back(render_group(g.spec));
        auto& tw = trace.word.emplace_back(B);
        for (std::size_t b = 0; b < B; ++b) tw[b].resize(batch.num_sentences[b]);
        auto wv = att.weights.data();
        for (std::size_t i = 0; i < N; ++i) {
          auto& dst = tw[refs[i].post][refs[i].sentence];
          for (std::size_t t = 0; t < refs[i].length; ++t)
            dst.push_back(static_cast<double>(wv[i * steps_w + t]));
        }
      } else {
        std::vector<T> m(N * steps_w, T(0));
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t t = 0; t < refs[i].length; ++t) m[i * steps_w + t] = T(1);
        parts.push_back(g.conv.forward(input, Tensor<T>({N, steps_w}, std::move(m))));
      }
      if (parts.back().dim(1) != g.output_width)
        throw Error(ErrorKind::dimension, "group output width mismatch");
    }
    for (auto& [name, d] : sentence_sources_) {
      auto it = batch.sentence.find(name);
      if (it == batch.sentence.end())
        throw Error(ErrorKind::dimension, "batch lacks sentence source '" + name + "'");
      if (it->second.dim(0) != B || it->second.dim(1) != S || it->second.dim(2) != d)
        throw Error(ErrorKind::dimension, "sentence source '" + name + "' has shape " +
                                              shape_str(it->second.shape()));
      std::vector<T> x(N * d);
      const float* base = it->second.data().data();
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < d; ++k)
          x[i * d + k] = static_cast<T>(base[(refs[i].post * S + refs[i].sentence) * d + k]);
      parts.push_back(dropout(Tensor<T>({N, d}, std::move(x)), cfg_.dropout, train, rng));
    }
    Tensor<T> sentences = concat_last_axis(parts);
    if (sentences.dim(1) != sentence_width_)
      throw Error(ErrorKind::dimension, "sentence-level width " +
                                            std::to_string(sentences.dim(1)) + " != " +
                                            std::to_string(sentence_width_));

    // post level
    std::vector<Tensor<T>> seq;
    for (std::size_t s = 0; s < steps_s; ++s) {
      std::vector<std::ptrdiff_t> idx(B);
      for (std::size_t b = 0; b < B; ++b) idx[b] = slot[b][s];
      seq.push_back(gather_rows(sentences, idx));
    }
    Tensor<T> post_in = reshape(concat_rows(seq), {steps_s, B, sentence_width_});
    auto post_states = post_lstm_.forward(post_in, batch.num_sentences);
    auto post = post_attn_.forward(post_states, batch.num_sentences);
    trace.sentence.resize(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < batch.num_sentences[b]; ++s)
        trace.sentence[b].push_back(static_cast<double>(post.weights.data()[b * steps_s + s]));

    Tensor<T> logits = head_.forward(dropout(post.vec, cfg_.dropout, train, rng));
    result.probs = cfg_.loss == LossKind::ebce ? sigmoid(logits) : softmax_rows(logits);
    return result;
  }

  static std::string render_group(const WordGroup& g) {
    ArchExpr e;
    e.items.push_back(g);
    auto s = render(e);
    return s.substr(2, s.size() - 3);
  }

  ArchExpr arch_;
  ModelConfig cfg_;
  std::size_t outputs_ = 0;
  std::vector<Group> groups_;
  std::vector<std::pair<std::string, std::size_t>> sentence_sources_;
  std::size_t sentence_width_ = 0;
  BiLstmLayer<T> post_lstm_;
  AttentionLayer<T> post_attn_;
  Dense<T> head_;
};

struct WordScore {
  std::string word;
  std::size_t position;
  double score;
};

struct PostExplanation {
  std::string id;
  std::vector<std::vector<WordScore>> top_words;  // per sentence
  std::vector<std::size_t> sentence_ranking;      // most attended first
  std::vector<double> sentence_weights;
};

// Combines the word attention of all wl groups by element-wise max and
// reports the top-k words of each sentence plus the sentence ranking.
inline std::vector<PostExplanation> explain(const AttentionTrace& trace,
                                            const PostBatch& batch, std::size_t k) {
  if (trace.word.empty())
    throw Error(ErrorKind::explain_unavailable,
                "explain needs at least one wl group in the architecture");
  std::vector<PostExplanation> out;
  for (std::size_t b = 0; b < batch.size; ++b) {
    PostExplanation e;
    e.id = batch.ids[b];
    for (std::size_t s = 0; s < batch.num_sentences[b]; ++s) {
      const std::size_t len = batch.length(b, s);
      std::vector<double> combined(len, 0.0);
      for (auto& g : trace.word)
        for (std::size_t w = 0; w < len; ++w) combined[w] = std::max(combined[w], g[b][s][w]);
      std::vector<std::size_t> order(len);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](auto a, auto c) { return combined[a] > combined[c]; });
      std::vector<WordScore> top;
      for (std::size_t i = 0; i < std::min(k, len); ++i)
        top.push_back({batch.tokens[b][s][order[i]], order[i], combined[order[i]]});
      e.top_words.push_back(std::move(top));
    }
    e.sentence_weights = trace.sentence.at(b);
    e.sentence_ranking.resize(e.sentence_weights.size());
    std::iota(e.sentence_ranking.begin(), e.sentence_ranking.end(), 0);
    std::stable_sort(e.sentence_ranking.begin(), e.sentence_ranking.end(),
                     [&](auto a, auto c) { return e.sentence_weights[a] > e.sentence_weights[c]; });
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mlcat
