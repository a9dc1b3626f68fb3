#pragma once

// Architecture expressions such as "s(wl(elmo), wl(glove), tbert)".
//
//   expr  := "s" "(" item ("," item)* ")"
//   item  := group | ID
//   group := ("wl" | "wc") "(" ID ("," ID)* ")"
//
// wl(...) concatenates word embeddings and encodes each sentence with a
// biLSTM + attention; wc(...) does the same with the convolutional block.
// A bare ID names a sentence-embedding source. Identifiers are
// case-insensitive and rendered in lower case.

#include <cctype>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlcat/error.hpp"

namespace mlcat {

enum class GroupKind { lstm, conv };

struct WordGroup {
  GroupKind kind = GroupKind::lstm;
  std::vector<std::string> sources;
  std::size_t offset = 0;
  std::vector<std::size_t> source_offsets;  // byte offset of each source id

  bool operator==(const WordGroup& o) const {
    return kind == o.kind && sources == o.sources;
  }
};

struct SentenceSource {
  std::string name;
  std::size_t offset = 0;

  bool operator==(const SentenceSource& o) const { return name == o.name; }
};

using ArchItem = std::variant<WordGroup, SentenceSource>;

struct ArchExpr {
  std::vector<ArchItem> items;

  bool operator==(const ArchExpr& o) const { return items == o.items; }

  std::vector<const WordGroup*> groups() const {
    std::vector<const WordGroup*> out;
    for (auto& it : items)
      if (auto* g = std::get_if<WordGroup>(&it)) out.push_back(g);
    return out;
  }

  std::vector<std::string> sentence_sources() const {
    std::vector<std::string> out;
    for (auto& it : items)
      if (auto* s = std::get_if<SentenceSource>(&it)) out.push_back(s->name);
    return out;
  }

  // distinct word sources
  std::size_t f() const {
    std::set<std::string> s;
    for (auto* g : groups()) s.insert(g->sources.begin(), g->sources.end());
    return s.size();
  }
  // distinct sentence sources
  std::size_t g() const {
    auto v = sentence_sources();
    return std::set<std::string>(v.begin(), v.end()).size();
  }
  std::size_t p() const { return groups().size(); }
  std::size_t q() const { return 1; }

  bool has_lstm_group() const {
    for (auto* g : groups())
      if (g->kind == GroupKind::lstm) return true;
    return false;
  }
};

// Declared embedding sources and their widths.
struct SourceCatalog {
  std::map<std::string, std::size_t> word_dims;
  std::map<std::string, std::size_t> sentence_dims;
};

inline std::string render(const ArchExpr& e) {
  std::string out = "s(";
  for (std::size_t i = 0; i < e.items.size(); ++i) {
    if (i) out += ", ";
    if (auto* g = std::get_if<WordGroup>(&e.items[i])) {
      out += g->kind == GroupKind::lstm ? "wl(" : "wc(";
      for (std::size_t j = 0; j < g->sources.size(); ++j) {
        if (j) out += ", ";
        out += g->sources[j];
      }
      out += ')';
    } else {
      out += std::get<SentenceSource>(e.items[i]).name;
    }
  }
  return out + ')';
}

namespace detail {

class ArchParser {
 public:
  explicit ArchParser(std::string_view text) : text_(text) {}

  ArchExpr parse() {
    ArchExpr e;
    auto [head, at] = ident("'s'");
    if (head != "s") fail(at, "expression must start with s(...), found '" + head + "'");
    expect('(');
    do {
      e.items.push_back(item());
    } while (accept(','));
    expect(')');
    skip_ws();
    if (pos_ < text_.size()) {
      if (text_[pos_] == ',')
        fail(pos_, "multiple s() nodes are not supported");
      fail(pos_, std::string("unexpected trailing '") + text_[pos_] + "'");
    }
    return e;
  }

 private:
  ArchItem item() {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ')') fail(pos_, "empty group");
    auto [name, at] = ident("a group or sentence source");
    if (name == "wl" || name == "wc") {
      WordGroup g;
      g.kind = name == "wl" ? GroupKind::lstm : GroupKind::conv;
      g.offset = at;
      expect('(');
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == ')') fail(pos_, "empty group");
      do {
        auto [src, src_at] = ident("a word source");
        if (is_keyword(src)) fail(src_at, "'" + src + "' cannot be nested here");
        g.sources.push_back(src);
        g.source_offsets.push_back(src_at);
      } while (accept(','));
      expect(')');
      return g;
    }
    if (name == "s") fail(at, "nested s() nodes are not supported");
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(')
      fail(pos_, "unknown operator '" + name + "'");
    return SentenceSource{name, at};
  }

  static bool is_keyword(const std::string& s) {
    return s == "s" || s == "wl" || s == "wc";
  }

  std::pair<std::string, std::size_t> ident(const char* what) {
    skip_ws();
    const std::size_t start = pos_;
    std::string out;
    while (pos_ < text_.size()) {
      unsigned char c = static_cast<unsigned char>(text_[pos_]);
      if (!(std::isalnum(c) || c == '_' || c == '-' || c == '.')) break;
      out += static_cast<char>(std::tolower(c));
      ++pos_;
    }
    if (out.empty()) {
      if (pos_ >= text_.size()) fail(pos_, std::string("unexpected end, expected ") + what);
      fail(pos_, std::string("unexpected '") + text_[pos_] + "', expected " + what);
    }
    return {out, start};
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size())
      fail(pos_, std::string("unbalanced parentheses: expected '") + c + "' before end");
    if (text_[pos_] != c)
      fail(pos_, std::string("expected '") + c + "', found '" + text_[pos_] + "'");
    ++pos_;
  }

  [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
    throw PositionedError(ErrorKind::parse, at, "architecture: " + msg);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void validate(const ArchExpr& e, const SourceCatalog& catalog) {
  for (auto& it : e.items) {
    if (auto* g = std::get_if<WordGroup>(&it)) {
      for (std::size_t i = 0; i < g->sources.size(); ++i)
        if (!catalog.word_dims.count(g->sources[i]))
          throw PositionedError(
              ErrorKind::parse, i < g->source_offsets.size() ? g->source_offsets[i] : g->offset,
              "architecture: unknown word source '" + g->sources[i] + "'");
    } else {
      auto& s = std::get<SentenceSource>(it);
      if (!catalog.sentence_dims.count(s.name))
        throw PositionedError(ErrorKind::parse, s.offset,
                              "architecture: unknown sentence source '" + s.name + "'");
    }
  }
}

// Syntax-only parse.
inline ArchExpr parse_arch(std::string_view text) {
  return detail::ArchParser(text).parse();
}

// Parse and resolve every source name against the catalog.
inline ArchExpr parse_arch(std::string_view text, const SourceCatalog& catalog) {
  auto e = parse_arch(text);
  validate(e, catalog);
  return e;
}

}  // namespace mlcat
