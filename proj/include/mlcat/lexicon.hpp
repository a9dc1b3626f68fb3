#pragma once

// Per-word linguistic feature vectors (33 dims) from lexicon files.
//
// Layout:
//   [0, 10)  binary lexicons, in kBinaryLexicons order
//   [10, 20) PERMA, five factors x {pos, neg}
//   [20, 30) NRC, eight emotions then positive/negative
//   [30, 33) valence, arousal, dominance
//
// A lexicon directory holds <name>.txt (one token per line) for each binary
// lexicon and <name>.tsv (token<TAB>score) for each scored dimension. Missing
// files count as empty lexicons. Absent tokens get 0 in binary slots and the
// dimension's imputation mean in scored slots.

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mlcat/dataset.hpp"
#include "mlcat/embeddings.hpp"

namespace mlcat {

inline constexpr std::array<const char*, 10> kBinaryLexicons = {
    "assertive", "implicative", "hedges", "factive", "report",
    "entailment", "strong_subjective", "weak_subjective", "positive", "negative"};

inline constexpr std::array<const char*, 23> kScoredDims = {
    "perma_positive_emotion_pos", "perma_positive_emotion_neg",
    "perma_engagement_pos", "perma_engagement_neg",
    "perma_relationships_pos", "perma_relationships_neg",
    "perma_meaning_pos", "perma_meaning_neg",
    "perma_accomplishment_pos", "perma_accomplishment_neg",
    "nrc_anger", "nrc_anticipation", "nrc_disgust", "nrc_fear",
    "nrc_joy", "nrc_sadness", "nrc_surprise", "nrc_trust",
    "nrc_positive", "nrc_negative",
    "vad_valence", "vad_arousal", "vad_dominance"};

inline constexpr std::size_t kLingDim = kBinaryLexicons.size() + kScoredDims.size();
static_assert(kLingDim == 33);

inline constexpr const char* kLingSource = "ling";
inline constexpr const char* kLexiconEnv = "MLCAT_LEXICONS";

struct LexiconSet {
  std::array<std::unordered_set<std::string>, kBinaryLexicons.size()> binary;
  std::array<std::unordered_map<std::string, double>, kScoredDims.size()> scored;
  std::array<double, kScoredDims.size()> means{};  // imputation values

  // Sets each scored dimension's mean to the average score of the given
  // vocabulary tokens that the lexicon covers. A dimension with no covered
  // token falls back to the mean of the whole lexicon, or 0 when empty.
  void fit_means(const std::vector<std::string>& vocabulary) {
    for (std::size_t d = 0; d < scored.size(); ++d) {
      double s = 0;
      std::size_t n = 0;
      for (auto& tok : vocabulary) {
        auto it = scored[d].find(tok);
        if (it == scored[d].end()) continue;
        s += it->second;
        ++n;
      }
      if (n == 0) {
        for (auto& [tok, v] : scored[d]) s += v;
        n = scored[d].size();
      }
      means[d] = n == 0 ? 0.0 : s / static_cast<double>(n);
    }
  }
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::io, "cannot open " + p.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace detail

inline LexiconSet load_lexicons(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "lexicon directory not found: " + dir);
  LexiconSet lex;
  for (std::size_t i = 0; i < kBinaryLexicons.size(); ++i) {
    const fs::path p = fs::path(dir) / (std::string(kBinaryLexicons[i]) + ".txt");
    if (!fs::exists(p)) {
      warn("lexicon '" + std::string(kBinaryLexicons[i]) + "' missing in " + dir);
      continue;
    }
    for (auto& line : detail::read_lines(p)) {
      auto tok = detail::trim(line);
      if (!tok.empty() && tok[0] != '#') lex.binary[i].insert(tok);
    }
  }
  for (std::size_t d = 0; d < kScoredDims.size(); ++d) {
    const fs::path p = fs::path(dir) / (std::string(kScoredDims[d]) + ".tsv");
    if (!fs::exists(p)) {
      warn("lexicon '" + std::string(kScoredDims[d]) + "' missing in " + dir);
      continue;
    }
    std::size_t lineno = 0;
    for (auto& line : detail::read_lines(p)) {
      ++lineno;
      if (detail::trim(line).empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw Error(ErrorKind::format, p.string() + ":" + std::to_string(lineno) +
                                           ": expected token<TAB>score");
      const std::string score = detail::trim(line.substr(tab + 1));
      char* end = nullptr;
      const double v = std::strtod(score.c_str(), &end);
      if (score.empty() || *end != '\0' || !std::isfinite(v))
        throw Error(ErrorKind::format, p.string() + ":" + std::to_string(lineno) +
                                           ": bad score '" + score + "'");
      lex.scored[d][detail::trim(line.substr(0, tab))] = v;
    }
  }
  return lex;
}

// Directory from the environment, if set.
inline std::string lexicon_dir_from_env() {
  const char* v = std::getenv(kLexiconEnv);
  return v ? std::string(v) : std::string();
}

inline std::array<float, kLingDim> featurize_word(const std::string& token, const LexiconSet& lex) {
  std::array<float, kLingDim> out{};
  for (std::size_t i = 0; i < lex.binary.size(); ++i)
    out[i] = lex.binary[i].count(token) ? 1.0f : 0.0f;
  for (std::size_t d = 0; d < lex.scored.size(); ++d) {
    auto it = lex.scored[d].find(token);
    out[kBinaryLexicons.size() + d] =
        static_cast<float>(it == lex.scored[d].end() ? lex.means[d] : it->second);
  }
  return out;
}

// Sorted distinct tokens of a set of posts.
inline std::vector<std::string> vocabulary(const std::vector<Post>& posts) {
  std::set<std::string> v;
  for (auto& p : posts)
    for (auto& s : p.sentences) v.insert(s.begin(), s.end());
  return {v.begin(), v.end()};
}

// One 33-dim row per token of `posts`. Means must already be fitted.
inline EmbeddingTable build_ling_source(const std::vector<Post>& posts, const LexiconSet& lex) {
  auto vocab = vocabulary(posts);
  if (vocab.empty()) throw Error(ErrorKind::empty_input, "ling source: empty vocabulary");
  EmbeddingTable t(kLingDim);
  for (auto& tok : vocab) {
    auto f = featurize_word(tok, lex);
    t.add(tok, f);
  }
  return t;
}

}  // namespace mlcat
