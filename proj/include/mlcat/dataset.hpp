#pragma once

// Labeled post collections.
//
// Dataset file: UTF-8, one record per line
//   #schema=23                      header; 23|fine or 14|coarse
//   id<TAB>label;label;...<TAB>text
// Labels are canonical category names from the declared label space.
// Fine-space labels are merged into the coarse space on load.

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mlcat/schema.hpp"
#include "mlcat/text.hpp"

namespace mlcat {

struct Post {
  std::string id;
  std::string text;                                // as given
  LabelSet labels;                                 // coarse label ids
  std::vector<std::vector<std::string>> sentences;  // preprocessed and split
};

// Preprocesses and splits; throws if nothing survives.
inline Post make_post(std::string id, std::string text, LabelSet labels) {
  Post p{std::move(id), std::move(text), std::move(labels), {}};
  try {
    p.sentences = split_sentences(preprocess(p.text));
  } catch (const Error& e) {
    throw Error(e.kind(), "post '" + p.id + "': " + e.what());
  }
  if (p.sentences.empty())
    throw Error(ErrorKind::empty_input, "post '" + p.id + "' has no words");
  return p;
}

enum class LabelSpace { fine, coarse };

struct Dataset {
  LabelSchema schema = LabelSchema::sexism();
  std::vector<Post> posts;

  std::size_t num_labels() const { return schema.coarse_size(); }
};

namespace detail {

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline LabelSpace parse_schema_header(const std::string& line, std::size_t lineno) {
  auto v = trim(line.substr(std::string("#schema=").size()));
  if (v == "23" || v == "fine") return LabelSpace::fine;
  if (v == "14" || v == "coarse") return LabelSpace::coarse;
  throw Error(ErrorKind::format, "line " + std::to_string(lineno) +
                                     ": unknown schema header value '" + v + "'");
}

}  // namespace detail

inline Dataset parse_dataset(const std::string& text,
                             const LabelSchema& schema = LabelSchema::sexism()) {
  Dataset ds;
  ds.schema = schema;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::optional<LabelSpace> space;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#schema=", 0) == 0) {
      space = detail::parse_schema_header(line, lineno);
      continue;
    }
    if (line[0] == '#') continue;
    if (!space)
      throw Error(ErrorKind::format, "dataset is missing the #schema= header line");
    auto fields = detail::split_on(line, '\t');
    if (fields.size() < 3)
      throw Error(ErrorKind::format, "line " + std::to_string(lineno) +
                                         ": expected id<TAB>labels<TAB>text");
    std::string textfield = fields[2];
    for (std::size_t k = 3; k < fields.size(); ++k) textfield += " " + fields[k];
    LabelSet labels;
    for (auto& raw : detail::split_on(fields[1], ';')) {
      auto name = detail::trim(raw);
      if (name.empty()) continue;
      try {
        if (*space == LabelSpace::fine)
          labels.insert(schema.parent_of(schema.fine_index(name)));
        else
          labels.insert(schema.coarse_index(name));
      } catch (const Error& e) {
        throw Error(ErrorKind::schema, "line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (labels.empty())
      throw Error(ErrorKind::invalid_target,
                  "line " + std::to_string(lineno) + ": post has no labels");
    ds.posts.push_back(make_post(detail::trim(fields[0]), textfield, std::move(labels)));
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path,
                            const LabelSchema& schema = LabelSchema::sexism()) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open dataset " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), schema);
}

// Writes in the coarse label space.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << "#schema=coarse\n";
  for (auto& p : ds.posts) {
    out << p.id << '\t';
    bool first = true;
    for (auto l : p.labels) {
      if (!first) out << ';';
      out << ds.schema.coarse()[l];
      first = false;
    }
    out << '\t' << p.text << '\n';
  }
}

// Unlabeled input for prediction: "id<TAB>text" or a full dataset line.
inline std::vector<Post> load_texts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::vector<Post> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split_on(line, '\t');
    if (fields.size() < 2)
      throw Error(ErrorKind::format, "expected id<TAB>text in " + path);
    out.push_back(make_post(detail::trim(fields[0]), fields.back(), {}));
  }
  return out;
}

struct DatasetSplit {
  std::vector<Post> train, validation, test;
};

// Seeded 70/15/15 split. Test and validation each get floor(0.15 n) posts.
inline DatasetSplit split_dataset(const std::vector<Post>& posts, std::uint64_t seed) {
  if (posts.size() < 10)
    throw Error(ErrorKind::split, "need at least 10 posts to split, got " +
                                      std::to_string(posts.size()));
  std::vector<std::size_t> order(posts.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = posts.size() * 15 / 100;
  const std::size_t n_val = n_test;
  DatasetSplit s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Post& p = posts[order[i]];
    if (i < n_test) s.test.push_back(p);
    else if (i < n_test + n_val) s.validation.push_back(p);
    else s.train.push_back(p);
  }
  return s;
}

}  // namespace mlcat
