#pragma once

#include <cstdint>
#include <vector>

#include "mlcat/schema.hpp"

namespace mlcat {

// Binary targets y[i][j] for n rows and L labels.
struct LabelMatrix {
  std::size_t rows = 0, labels = 0;
  std::vector<std::uint8_t> y;

  LabelMatrix() = default;
  LabelMatrix(std::size_t n, std::size_t L) : rows(n), labels(L), y(n * L, 0) {}

  static LabelMatrix from_sets(const std::vector<LabelSet>& sets, std::size_t L) {
    LabelMatrix m(sets.size(), L);
    for (std::size_t i = 0; i < sets.size(); ++i)
      for (auto j : sets[i]) {
        if (j >= L)
          throw Error(ErrorKind::schema, "label id " + std::to_string(j) +
                                             " outside label space of " + std::to_string(L));
        m.y[i * L + j] = 1;
      }
    return m;
  }

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return y[i * labels + j]; }
  std::uint8_t& operator()(std::size_t i, std::size_t j) { return y[i * labels + j]; }

  std::size_t positives(std::size_t i) const {
    std::size_t c = 0;
    for (std::size_t j = 0; j < labels; ++j) c += y[i * labels + j];
    return c;
  }

  LabelSet row_set(std::size_t i) const {
    LabelSet s;
    for (std::size_t j = 0; j < labels; ++j)
      if (y[i * labels + j]) s.insert(j);
    return s;
  }
};

}  // namespace mlcat
