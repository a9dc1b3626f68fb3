#pragma once

// Pretrained embedding interchange files. All integers and floats are
// little-endian.
//
// Word table (WEMB):
//   "WEMB" u32 version=1 u32 vocab_count u32 dim
//   vocab_count x { u16 byte_len, UTF-8 token, dim x f32 }
//
// Sentence store (SEMB):
//   "SEMB" u32 version=1 u32 dim u64 record_count
//   record_count x { u16 id_len, UTF-8 post id, u16 sentence_count,
//                    sentence_count x dim x f32 }

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlcat/error.hpp"

namespace mlcat {

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim), zero_(dim, 0.0f) {
    if (dim == 0) throw Error(ErrorKind::config, "embedding dim must be positive");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void add(const std::string& token, std::span<const float> vec) {
    if (vec.size() != dim_)
      throw Error(ErrorKind::dimension, "vector for '" + token + "' has width " +
                                            std::to_string(vec.size()) + ", table dim " +
                                            std::to_string(dim_));
    if (!index_.emplace(token, tokens_.size()).second)
      throw Error(ErrorKind::format, "duplicate token '" + token + "'");
    tokens_.push_back(token);
    data_.insert(data_.end(), vec.begin(), vec.end());
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  // Out-of-vocabulary tokens map to the zero vector.
  std::span<const float> lookup(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return zero_;
    return {data_.data() + it->second * dim_, dim_};
  }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> data_;
  std::vector<float> zero_;
};

class SentenceEmbeddingStore {
 public:
  SentenceEmbeddingStore() = default;
  explicit SentenceEmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorKind::config, "embedding dim must be positive");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  // `vectors` holds sentence_count x dim floats.
  void add(const std::string& post_id, std::size_t sentence_count,
           std::span<const float> vectors) {
    if (vectors.size() != sentence_count * dim_)
      throw Error(ErrorKind::dimension, "post '" + post_id + "': " +
                                            std::to_string(vectors.size()) +
                                            " floats for " + std::to_string(sentence_count) +
                                            " sentences of dim " + std::to_string(dim_));
    if (!index_.emplace(post_id, ids_.size()).second)
      throw Error(ErrorKind::format, "duplicate post id '" + post_id + "'");
    ids_.push_back(post_id);
    counts_.push_back(sentence_count);
    data_.emplace_back(vectors.begin(), vectors.end());
  }

  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  std::size_t sentence_count(const std::string& id) const { return counts_.at(at(id)); }

  std::span<const float> sentence(const std::string& id, std::size_t s) const {
    auto i = at(id);
    if (s >= counts_[i])
      throw Error(ErrorKind::coverage, "post '" + id + "' has no sentence " + std::to_string(s));
    return {data_[i].data() + s * dim_, dim_};
  }

 private:
  std::size_t at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end())
      throw Error(ErrorKind::coverage, "no sentence embeddings for post '" + id + "'");
    return it->second;
  }

  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::size_t> counts_;
  std::vector<std::vector<float>> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class U>
  void le(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
  void str16(const std::string& s, const char* what) {
    if (s.size() > 0xFFFF)
      throw Error(ErrorKind::format, std::string(what) + " longer than 65535 bytes");
    le(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n)
      throw PositionedError(ErrorKind::format, pos_,
                            std::string("truncated file while reading ") + what);
  }
  template <class U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string str16(const char* what) { return bytes(le<std::uint16_t>(what), what); }
  void read_floats(std::vector<float>& out, std::size_t n, const char* what) {
    need(n * 4, what);
    out.resize(n);
    for (auto& f : out) f = f32(what);
  }

  void magic(const char* expected) {
    const std::size_t at = pos_;
    auto m = bytes(4, "magic");
    if (m != expected)
      throw PositionedError(ErrorKind::format, at,
                            std::string("bad magic, expected ") + expected);
  }
  void version() {
    const std::size_t at = pos_;
    auto v = le<std::uint32_t>("version");
    if (v != kEmbeddingFormatVersion)
      throw PositionedError(ErrorKind::format, at,
                            "unsupported version " + std::to_string(v));
  }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_word_embeddings(const EmbeddingTable& t) {
  detail::ByteWriter w;
  w.raw("WEMB", 4);
  w.le(kEmbeddingFormatVersion);
  w.le(static_cast<std::uint32_t>(t.size()));
  w.le(static_cast<std::uint32_t>(t.dim()));
  for (std::size_t i = 0; i < t.size(); ++i) {
    w.str16(t.tokens()[i], "token");
    for (float f : t.row(i)) w.f32(f);
  }
  return w.bytes();
}

inline EmbeddingTable decode_word_embeddings(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  r.magic("WEMB");
  r.version();
  const auto count = r.le<std::uint32_t>("vocab count");
  const std::size_t dim_at = r.offset();
  const auto dim = r.le<std::uint32_t>("dim");
  if (dim == 0) throw PositionedError(ErrorKind::format, dim_at, "dim must be positive");
  EmbeddingTable t(dim);
  std::vector<float> vec;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    auto token = r.str16("token");
    r.read_floats(vec, dim, "vector");
    if (t.contains(token))
      throw PositionedError(ErrorKind::format, at, "duplicate token '" + token + "'");
    t.add(token, vec);
  }
  if (!r.at_end())
    throw PositionedError(ErrorKind::format, r.offset(), "trailing bytes after last token");
  return t;
}

inline void save_word_embeddings(const EmbeddingTable& t, const std::string& path) {
  auto bytes = encode_word_embeddings(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline EmbeddingTable load_word_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return decode_word_embeddings(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
}

inline std::vector<char> encode_sentence_embeddings(const SentenceEmbeddingStore& s) {
  detail::ByteWriter w;
  w.raw("SEMB", 4);
  w.le(kEmbeddingFormatVersion);
  w.le(static_cast<std::uint32_t>(s.dim()));
  w.le(static_cast<std::uint64_t>(s.size()));
  for (auto& id : s.ids()) {
    w.str16(id, "post id");
    const auto n = s.sentence_count(id);
    if (n > 0xFFFF) throw Error(ErrorKind::format, "post '" + id + "' has too many sentences");
    w.le(static_cast<std::uint16_t>(n));
    for (std::size_t k = 0; k < n; ++k)
      for (float f : s.sentence(id, k)) w.f32(f);
  }
  return w.bytes();
}

inline SentenceEmbeddingStore decode_sentence_embeddings(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  r.magic("SEMB");
  r.version();
  const std::size_t dim_at = r.offset();
  const auto dim = r.le<std::uint32_t>("dim");
  if (dim == 0) throw PositionedError(ErrorKind::format, dim_at, "dim must be positive");
  const auto count = r.le<std::uint64_t>("record count");
  SentenceEmbeddingStore s(dim);
  std::vector<float> vec;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    auto id = r.str16("post id");
    const auto n = r.le<std::uint16_t>("sentence count");
    r.read_floats(vec, static_cast<std::size_t>(n) * dim, "sentence vectors");
    if (s.contains(id))
      throw PositionedError(ErrorKind::format, at, "duplicate post id '" + id + "'");
    s.add(id, n, vec);
  }
  if (!r.at_end())
    throw PositionedError(ErrorKind::format, r.offset(), "trailing bytes after last record");
  return s;
}

inline void save_sentence_embeddings(const SentenceEmbeddingStore& s, const std::string& path) {
  auto bytes = encode_sentence_embeddings(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline SentenceEmbeddingStore load_sentence_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return decode_sentence_embeddings(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
}

enum class EmbeddingKind { word, sentence };

// Reads the 4-byte magic to tell the two formats apart.
inline EmbeddingKind sniff_embedding_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  char m[4] = {};
  in.read(m, 4);
  if (in.gcount() == 4 && std::memcmp(m, "WEMB", 4) == 0) return EmbeddingKind::word;
  if (in.gcount() == 4 && std::memcmp(m, "SEMB", 4) == 0) return EmbeddingKind::sentence;
  throw PositionedError(ErrorKind::format, 0, path + ": not a WEMB or SEMB file");
}

}  // namespace mlcat
