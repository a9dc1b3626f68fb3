#pragma once

// Keyword-generated multi-label corpus with random embeddings, for smoke
// tests and end-to-end checks where the generating rule is known.
//
// Each label owns a few keywords. A post draws 1-3 labels and gets one
// sentence per label containing one or two of that label's keywords among
// filler words, plus up to two filler-only sentences, in random order.
// Word vectors are i.i.d. Gaussian. The stand-in sentence encoder gives each
// label a random prototype and each keyword a vector near its label's
// prototype; a sentence vector is tanh of the sum of its keywords' vectors
// plus a projection of its mean filler vector, plus noise.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mlcat/dataset.hpp"
#include "mlcat/embeddings.hpp"

namespace mlcat {

struct SyntheticSpec {
  std::size_t posts = 2000;
  std::size_t labels = 14;
  std::size_t keywords_per_label = 3;
  std::size_t filler_words = 300;
  std::size_t word_dim = 32;
  std::size_t sentence_dim = 48;
  double sentence_noise = 0.05;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  Dataset dataset;
  EmbeddingTable words;
  SentenceEmbeddingStore sentences;
  std::vector<std::vector<std::string>> keywords;  // per label
};

namespace detail {

inline std::string synthetic_word(char prefix, std::size_t a, std::size_t b = 0) {
  return std::string(1, prefix) + std::to_string(a) + (prefix == 'k' ? "x" + std::to_string(b) : "");
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.labels == 0 || spec.labels > LabelSchema::sexism().coarse_size())
    throw Error(ErrorKind::config, "synthetic corpus supports 1.." +
                                       std::to_string(LabelSchema::sexism().coarse_size()) +
                                       " labels");
  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus c;
  c.words = EmbeddingTable(spec.word_dim);
  c.sentences = SentenceEmbeddingStore(spec.sentence_dim);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto add_word = [&](const std::string& w) {
    std::vector<float> v(spec.word_dim);
    for (auto& x : v) x = static_cast<float>(normal(rng));
    c.words.add(w, v);
  };
  std::vector<std::string> filler;
  for (std::size_t i = 0; i < spec.filler_words; ++i) {
    filler.push_back(detail::synthetic_word('f', i));
    add_word(filler.back());
  }
  c.keywords.resize(spec.labels);
  for (std::size_t l = 0; l < spec.labels; ++l)
    for (std::size_t k = 0; k < spec.keywords_per_label; ++k) {
      c.keywords[l].push_back(detail::synthetic_word('k', l, k));
      add_word(c.keywords[l].back());
    }

  std::vector<double> proj(spec.sentence_dim * spec.word_dim);
  for (auto& x : proj) x = normal(rng) / std::sqrt(static_cast<double>(spec.word_dim));
  std::map<std::string, std::vector<double>> topic;  // keyword -> sentence-space vector
  for (std::size_t l = 0; l < spec.labels; ++l) {
    std::vector<double> proto(spec.sentence_dim);
    for (auto& x : proto) x = normal(rng);
    for (auto& kw : c.keywords[l]) {
      auto& v = topic[kw];
      for (std::size_t o = 0; o < spec.sentence_dim; ++o) v.push_back(proto[o] + 0.3 * normal(rng));
    }
  }

  // Skewed label frequencies so the imbalance weights matter.
  std::vector<double> label_weight(spec.labels);
  for (std::size_t l = 0; l < spec.labels; ++l) label_weight[l] = 1.0 / (1.0 + 0.15 * static_cast<double>(l));
  std::discrete_distribution<std::size_t> pick_label(label_weight.begin(), label_weight.end());
  std::discrete_distribution<std::size_t> pick_count({0.55, 0.3, 0.15});
  std::uniform_int_distribution<std::size_t> pick_filler(0, filler.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_len(3, 10);
  std::uniform_int_distribution<std::size_t> pick_extra(0, 2);
  std::uniform_int_distribution<std::size_t> pick_kw(0, spec.keywords_per_label - 1);

  for (std::size_t i = 0; i < spec.posts; ++i) {
    const std::size_t want = std::min(spec.labels, pick_count(rng) + 1);
    LabelSet labels;
    while (labels.size() < want) labels.insert(pick_label(rng));
    std::vector<std::vector<std::string>> sents;
    for (auto l : labels) {
      std::vector<std::string> s;
      const std::size_t len = pick_len(rng);
      for (std::size_t w = 0; w < len; ++w) s.push_back(filler[pick_filler(rng)]);
      const std::size_t nkw = 1 + (rng() % 2);
      for (std::size_t k = 0; k < nkw; ++k) {
        std::uniform_int_distribution<std::size_t> at(0, s.size());
        s.insert(s.begin() + static_cast<std::ptrdiff_t>(at(rng)), c.keywords[l][pick_kw(rng)]);
      }
      sents.push_back(std::move(s));
    }
    const std::size_t extra = pick_extra(rng);
    for (std::size_t e = 0; e < extra; ++e) {
      std::vector<std::string> s;
      const std::size_t len = pick_len(rng);
      for (std::size_t w = 0; w < len; ++w) s.push_back(filler[pick_filler(rng)]);
      sents.push_back(std::move(s));
    }
    std::shuffle(sents.begin(), sents.end(), rng);
    std::string text;
    for (auto& s : sents) {
      for (std::size_t w = 0; w < s.size(); ++w) text += (w ? " " : "") + s[w];
      text += ". ";
    }
    Post p = make_post("p" + std::to_string(i), text, labels);

    std::vector<float> svec;
    for (auto& sent : p.sentences) {
      std::vector<double> mean(spec.word_dim, 0.0), z(spec.sentence_dim, 0.0);
      std::size_t fillers = 0;
      for (auto& w : sent) {
        if (auto it = topic.find(w); it != topic.end()) {
          for (std::size_t o = 0; o < spec.sentence_dim; ++o) z[o] += it->second[o];
          continue;
        }
        auto v = c.words.lookup(w);
        for (std::size_t k = 0; k < spec.word_dim; ++k) mean[k] += v[k];
        ++fillers;
      }
      for (auto& m : mean) m /= static_cast<double>(std::max<std::size_t>(fillers, 1));
      for (std::size_t o = 0; o < spec.sentence_dim; ++o) {
        for (std::size_t k = 0; k < spec.word_dim; ++k) z[o] += proj[o * spec.word_dim + k] * mean[k];
        svec.push_back(static_cast<float>(std::tanh(z[o]) + spec.sentence_noise * normal(rng)));
      }
    }
    c.sentences.add(p.id, p.sentences.size(), svec);
    c.dataset.posts.push_back(std::move(p));
  }
  return c;
}

}  // namespace mlcat
