#pragma once

#include <algorithm>
#include <vector>

#include "dairs/core.hpp"
#include "dairs/evaluator.hpp"

namespace dairs {

/// The two action records plus the shared step counter. The feature scan
/// position is `step % m`, the instance scan position `step % n`.
struct SelectionMask {
  std::vector<std::uint8_t> features;
  std::vector<std::uint8_t> instances;
  std::size_t step = 0;

  static SelectionMask full(std::size_t m, std::size_t n) {
    return {std::vector<std::uint8_t>(m, 1), std::vector<std::uint8_t>(n, 1), 0};
  }

  bool operator==(const SelectionMask&) const = default;
};

enum class EnvMode { joint_shared, joint_independent, feature_only, instance_only };

/// Subset K of the metrics that enters the reward.
struct MetricSet {
  bool accuracy = true;
  bool relevance = true;
  bool non_redundancy = true;

  std::size_t size() const {
    return static_cast<std::size_t>(accuracy) + relevance + non_redundancy;
  }
};

struct EnvConfig {
  EnvMode mode = EnvMode::joint_shared;
  std::size_t grid = 32;
  MetricSet metrics;
};

inline std::size_t scan_index(std::size_t step, std::size_t len) {
  if (len == 0) throw Error("scan over an empty dimension");
  return step % len;
}

/// Writes both actions at the current scan positions and advances the step.
/// Single-agent modes leave the other record untouched.
inline void apply_actions(SelectionMask& mask, int feature_action,
                          int instance_action,
                          EnvMode mode = EnvMode::joint_shared) {
  if (mode != EnvMode::instance_only) {
    mask.features[scan_index(mask.step, mask.features.size())] =
        static_cast<std::uint8_t>(feature_action != 0);
  }
  if (mode != EnvMode::feature_only) {
    mask.instances[scan_index(mask.step, mask.instances.size())] =
        static_cast<std::uint8_t>(instance_action != 0);
  }
  ++mask.step;
}

/// h[i][j] = a_I[i] * x[i][j] * a_F[j].
inline Matrix padded_state_matrix(const Matrix& x,
                                  std::span<const std::uint8_t> features,
                                  std::span<const std::uint8_t> instances) {
  if (features.size() != x.cols || instances.size() != x.rows) {
    throw Error("shape mismatch: selection mask vs data matrix");
  }
  Matrix h(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (!instances[i]) continue;
    for (std::size_t j = 0; j < x.cols; ++j) {
      if (features[j]) h(i, j) = x(i, j);
    }
  }
  return h;
}

/// Average-pools `h` onto a grid x grid matrix via `cell_bounds`.
inline Matrix state_grid(const Matrix& h, std::size_t grid) {
  if (grid == 0) throw Error("state grid size must be positive");
  Matrix out(grid, grid);
  for (std::size_t a = 0; a < grid; ++a) {
    const auto [r0, r1] = cell_bounds(h.rows, grid, a);
    for (std::size_t b = 0; b < grid; ++b) {
      const auto [c0, c1] = cell_bounds(h.cols, grid, b);
      double sum = 0.0;
      for (std::size_t i = r0; i < r1; ++i) {
        for (std::size_t j = c0; j < c1; ++j) sum += h(i, j);
      }
      out(a, b) = sum / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }
  return out;
}

/// state_grid(padded_state_matrix(x, features, instances), grid) without
/// materialising the padded matrix.
inline Matrix masked_state_grid(const Matrix& x,
                                std::span<const std::uint8_t> features,
                                std::span<const std::uint8_t> instances,
                                std::size_t grid) {
  if (features.size() != x.cols || instances.size() != x.rows) {
    throw Error("shape mismatch: selection mask vs data matrix");
  }
  if (grid == 0) throw Error("state grid size must be positive");
  // Column-band sums per row, then row bands.
  std::vector<std::pair<std::size_t, std::size_t>> col_cells(grid);
  for (std::size_t b = 0; b < grid; ++b) col_cells[b] = cell_bounds(x.cols, grid, b);
  Matrix out(grid, grid);
  std::vector<double> band(grid);
  for (std::size_t a = 0; a < grid; ++a) {
    const auto [r0, r1] = cell_bounds(x.rows, grid, a);
    std::fill(band.begin(), band.end(), 0.0);
    for (std::size_t i = r0; i < r1; ++i) {
      if (!instances[i]) continue;
      const auto row = x.row(i);
      for (std::size_t b = 0; b < grid; ++b) {
        double s = 0.0;
        for (std::size_t j = col_cells[b].first; j < col_cells[b].second; ++j) {
          if (features[j]) s += row[j];
        }
        band[b] += s;
      }
    }
    for (std::size_t b = 0; b < grid; ++b) {
      const auto [c0, c1] = col_cells[b];
      out(a, b) = band[b] / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }
  return out;
}

/// Mean over K of the per-metric change between consecutive steps.
inline double compute_reward(const MetricVector& prev, const MetricVector& curr,
                             const MetricSet& metrics = {}) {
  const std::size_t k = metrics.size();
  if (k == 0) return 0.0;
  double total = 0.0;
  if (metrics.accuracy) total += curr.accuracy - prev.accuracy;
  if (metrics.relevance) total += curr.relevance - prev.relevance;
  if (metrics.non_redundancy) total += curr.non_redundancy - prev.non_redundancy;
  return total / static_cast<double>(k);
}

inline std::pair<double, double> selection_ratio(const SelectionMask& mask) {
  auto mean = [](const std::vector<std::uint8_t>& v) {
    if (v.empty()) return 0.0;
    std::size_t on = 0;
    for (auto b : v) on += b;
    return static_cast<double>(on) / static_cast<double>(v.size());
  };
  return {mean(mask.features), mean(mask.instances)};
}

}  // namespace dairs
