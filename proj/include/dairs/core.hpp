#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dairs {

/// Thrown for every recoverable failure: bad input files, invalid
/// configuration, shape mismatches and numerical breakdown.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  bool operator==(const Matrix&) const = default;
};

/// Half-open range [begin, end) of source indices covered by cell `cell`
/// when `len` positions are pooled onto `parts` cells. Cells split the range
/// as evenly as possible with the larger cells first; when there are fewer
/// positions than cells, each cell replicates a single position.
inline std::pair<std::size_t, std::size_t> cell_bounds(std::size_t len,
                                                       std::size_t parts,
                                                       std::size_t cell) {
  if (len >= parts) {
    const std::size_t begin = (cell * len + parts - 1) / parts;
    const std::size_t end = ((cell + 1) * len + parts - 1) / parts;
    return {begin, end};
  }
  const std::size_t src = cell * len / parts;
  return {src, src + 1};
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for one stochastic consumer, derived from the master seed and a fixed
/// label so that adding a consumer never perturbs the others.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(master ^ mix64(h));
}

}  // namespace dairs
