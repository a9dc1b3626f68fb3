#pragma once

// Error categories shared across the library. Every failure surfaces as a
// mlcat::Error carrying a kind, so the CLI can print one categorized line.

#include <cstddef>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mlcat {

enum class ErrorKind {
  dimension,
  degenerate_length,
  empty_support,
  rank,
  parse,
  config,
  format,
  schema,
  coverage,
  split,
  mapping,
  empty_input,
  invalid_target,
  explain_unavailable,
  numeric,
  io,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::degenerate_length: return "degenerate_length";
    case ErrorKind::empty_support: return "empty_support";
    case ErrorKind::rank: return "rank";
    case ErrorKind::parse: return "parse";
    case ErrorKind::config: return "config";
    case ErrorKind::format: return "format";
    case ErrorKind::schema: return "schema";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::split: return "split";
    case ErrorKind::mapping: return "mapping";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::invalid_target: return "invalid_target";
    case ErrorKind::explain_unavailable: return "explain_unavailable";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse and format errors also carry the byte offset where decoding stopped.
class PositionedError : public Error {
 public:
  PositionedError(ErrorKind kind, std::size_t offset, const std::string& what)
      : Error(kind, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Warnings go through a replaceable sink (stderr by default) so tests can
// capture them.
using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}
}  // namespace detail

inline WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(detail::warning_mutex());
  auto previous = std::move(detail::warning_sink());
  detail::warning_sink() = std::move(sink);
  return previous;
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::warning_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

}  // namespace mlcat
