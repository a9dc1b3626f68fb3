#pragma once

// Padded mini-batches of posts.
//
// Word tensors are [B x S x W x d] per word source, sentence tensors
// [B x S x d] per sentence source; masks mark the valid prefix of sentences
// per post and of words per sentence. Posts with more than S sentences keep
// the first S; sentences with more than W words keep the first W.

#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mlcat/dataset.hpp"
#include "mlcat/embeddings.hpp"
#include "mlcat/label_matrix.hpp"
#include "mlcat/tensor.hpp"

namespace mlcat {

struct EmbeddingSources {
  std::map<std::string, const EmbeddingTable*> word;
  std::map<std::string, const SentenceEmbeddingStore*> sentence;
};

struct BatchGeometry {
  std::size_t max_sentences = 8;
  std::size_t max_words = kMaxSentenceWords;
};

struct PostBatch {
  std::size_t size = 0, max_sentences = 0, max_words = 0, num_labels = 0;
  std::vector<std::string> ids;
  std::map<std::string, Tensor<float>> word;      // [B x S x W x d]
  std::map<std::string, Tensor<float>> sentence;  // [B x S x d]
  Tensor<float> word_mask;                        // [B x S x W]
  Tensor<float> sentence_mask;                    // [B x S]
  std::vector<std::size_t> num_sentences;         // [B]
  std::vector<std::size_t> sentence_lengths;      // [B x S]
  std::vector<std::vector<std::vector<std::string>>> tokens;  // kept words
  std::vector<LabelSet> labels;

  LabelMatrix label_matrix() const { return LabelMatrix::from_sets(labels, num_labels); }
  std::size_t length(std::size_t b, std::size_t s) const {
    return sentence_lengths[b * max_sentences + s];
  }
};

// Checks that every post has sentence embeddings whose count matches the
// splitter's output.
inline void check_coverage(const std::vector<Post>& posts, const EmbeddingSources& src) {
  for (auto& [name, store] : src.sentence)
    for (auto& p : posts) {
      if (!store->contains(p.id))
        throw Error(ErrorKind::coverage, "sentence source '" + name +
                                             "' has no embeddings for post '" + p.id + "'");
      if (store->sentence_count(p.id) != p.sentences.size())
        throw Error(ErrorKind::coverage,
                    "sentence source '" + name + "' has " +
                        std::to_string(store->sentence_count(p.id)) +
                        " sentences for post '" + p.id + "', splitter produced " +
                        std::to_string(p.sentences.size()));
    }
}

inline PostBatch build_batch(const std::vector<const Post*>& posts,
                             const EmbeddingSources& src, const BatchGeometry& geo,
                             std::size_t num_labels) {
  const std::size_t B = posts.size(), S = geo.max_sentences, W = geo.max_words;
  if (B == 0) throw Error(ErrorKind::empty_input, "empty batch");
  if (S == 0 || W == 0) throw Error(ErrorKind::config, "batch geometry must be positive");
  PostBatch pb;
  pb.size = B;
  pb.max_sentences = S;
  pb.max_words = W;
  pb.num_labels = num_labels;
  pb.num_sentences.assign(B, 0);
  pb.sentence_lengths.assign(B * S, 0);
  pb.tokens.resize(B);
  std::vector<float> wmask(B * S * W, 0.0f), smask(B * S, 0.0f);
  for (std::size_t b = 0; b < B; ++b) {
    const Post& p = *posts[b];
    pb.ids.push_back(p.id);
    pb.labels.push_back(p.labels);
    const std::size_t ns = std::min(S, p.sentences.size());
    pb.num_sentences[b] = ns;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& words = p.sentences[s];
      const std::size_t nw = std::min(W, words.size());
      pb.sentence_lengths[b * S + s] = nw;
      pb.tokens[b].emplace_back(words.begin(), words.begin() + nw);
      smask[b * S + s] = 1.0f;
      for (std::size_t w = 0; w < nw; ++w) wmask[(b * S + s) * W + w] = 1.0f;
    }
  }
  for (auto& [name, table] : src.word) {
    const std::size_t d = table->dim();
    std::vector<float> v(B * S * W * d, 0.0f);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < pb.tokens[b].size(); ++s)
        for (std::size_t w = 0; w < pb.tokens[b][s].size(); ++w) {
          auto vec = table->lookup(pb.tokens[b][s][w]);
          std::copy(vec.begin(), vec.end(), v.begin() + ((b * S + s) * W + w) * d);
        }
    pb.word.emplace(name, Tensor<float>({B, S, W, d}, std::move(v)));
  }
  for (auto& [name, store] : src.sentence) {
    const std::size_t d = store->dim();
    std::vector<float> v(B * S * d, 0.0f);
    for (std::size_t b = 0; b < B; ++b) {
      const Post& p = *posts[b];
      if (!store->contains(p.id))
        throw Error(ErrorKind::coverage, "sentence source '" + name +
                                             "' has no embeddings for post '" + p.id + "'");
      if (store->sentence_count(p.id) != p.sentences.size())
        throw Error(ErrorKind::coverage, "sentence source '" + name +
                                             "' sentence count mismatch for post '" +
                                             p.id + "'");
      for (std::size_t s = 0; s < pb.num_sentences[b]; ++s) {
        auto vec = store->sentence(p.id, s);
        std::copy(vec.begin(), vec.end(), v.begin() + (b * S + s) * d);
      }
    }
    pb.sentence.emplace(name, Tensor<float>({B, S, d}, std::move(v)));
  }
  pb.word_mask = Tensor<float>({B, S, W}, std::move(wmask));
  pb.sentence_mask = Tensor<float>({B, S}, std::move(smask));
  return pb;
}

// Deterministic per-epoch batch order: a seeded shuffle (or identity) cut
// into chunks of batch_size.
inline std::vector<std::vector<std::size_t>> batch_order(std::size_t n,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed,
                                                         std::uint64_t epoch,
                                                         bool shuffle) {
  if (batch_size == 0) throw Error(ErrorKind::config, "batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x6d6c63u};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size)
    out.emplace_back(order.begin() + b, order.begin() + std::min(n, b + batch_size));
  return out;
}

// Lazily materializes the batches of one epoch.
class BatchStream {
 public:
  BatchStream(const std::vector<Post>& posts, EmbeddingSources src, BatchGeometry geo,
              std::size_t num_labels, std::size_t batch_size, std::uint64_t seed,
              std::uint64_t epoch, bool shuffle = true)
      : posts_(posts),
        src_(std::move(src)),
        geo_(geo),
        num_labels_(num_labels),
        chunks_(batch_order(posts.size(), batch_size, seed, epoch, shuffle)) {}

  std::size_t num_batches() const { return chunks_.size(); }

  std::optional<PostBatch> next() {
    if (next_ >= chunks_.size()) return std::nullopt;
    std::vector<const Post*> ptrs;
    for (auto i : chunks_[next_]) ptrs.push_back(&posts_[i]);
    ++next_;
    return build_batch(ptrs, src_, geo_, num_labels_);
  }

 private:
  const std::vector<Post>& posts_;
  EmbeddingSources src_;
  BatchGeometry geo_;
  std::size_t num_labels_;
  std::vector<std::vector<std::size_t>> chunks_;
  std::size_t next_ = 0;
};

}  // namespace mlcat
