#pragma once

// Text normalization and sentence splitting.
//
// preprocess() rules, applied per UTF-8 code point:
//   - ASCII letters are lower-cased; digits are kept
//   - '.', '!', '?' are kept; a run of them collapses to its first character
//   - apostrophes are kept; U+2018/U+2019 become '
//   - Latin-1 / Latin Extended-A/B letters (U+00C0..U+024F except U+00D7 and
//     U+00F7) are kept, U+00C0..U+00DE upper-case forms are lower-cased
//   - every other code point (and any invalid byte) becomes a space
//   - whitespace runs collapse to one space; leading/trailing spaces go
// The result is idempotent: preprocess(preprocess(x)) == preprocess(x).

#include <string>
#include <string_view>
#include <vector>

#include "mlcat/error.hpp"

namespace mlcat {

inline constexpr std::size_t kMaxSentenceWords = 35;

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Decodes one code point at `i`, advancing it. Returns U+FFFD on bad input.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3
                                  : (b0 >> 3) == 0x1E ? 4 : 0;
  if (len == 0 || i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b >> 6) != 0x2) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

inline bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

}  // namespace detail

inline std::string preprocess(std::string_view text) {
  std::string out;
  bool pending_space = false;
  char last = ' ';
  for (std::size_t i = 0; i < text.size();) {
    char32_t cp = detail::next_code_point(text, i);
    if (cp == 0x2018 || cp == 0x2019) cp = '\'';
    char32_t keep = 0;
    if (cp < 0x80) {
      const char c = static_cast<char>(cp);
      if (c >= 'A' && c <= 'Z') keep = cp + 32;
      else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'' ||
               detail::is_sentence_end(c))
        keep = cp;
    } else if (cp >= 0xC0 && cp <= 0x24F && cp != 0xD7 && cp != 0xF7) {
      keep = (cp <= 0xDE) ? cp + 0x20 : cp;
    }
    if (!keep) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      last = ' ';
      pending_space = false;
    }
    if (keep < 0x80 && detail::is_sentence_end(static_cast<char>(keep)) &&
        detail::is_sentence_end(last))
      continue;
    detail::append_utf8(out, keep);
    last = keep < 0x80 ? static_cast<char>(keep) : 'a';
  }
  if (out.empty())
    throw Error(ErrorKind::empty_input, "post is empty after preprocessing");
  return out;
}

// Splits preprocessed text into sentences of whitespace-separated words.
// Sentences end at '.', '!' or '?'; any sentence longer than `max_words`
// is wrapped into consecutive chunks. Empty sentences are dropped.
inline std::vector<std::vector<std::string>> split_sentences(
    std::string_view text, std::size_t max_words = kMaxSentenceWords) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> sentence;
  std::string word;
  auto flush_word = [&] {
    if (!word.empty()) sentence.push_back(std::move(word));
    word.clear();
  };
  auto flush_sentence = [&] {
    flush_word();
    for (std::size_t b = 0; b < sentence.size(); b += max_words) {
      auto e = std::min(sentence.size(), b + max_words);
      out.emplace_back(sentence.begin() + b, sentence.begin() + e);
    }
    sentence.clear();
  };
  for (char c : text) {
    if (detail::is_sentence_end(c)) flush_sentence();
    else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') flush_word();
    else word += c;
  }
  flush_sentence();
  return out;
}

}  // namespace mlcat
