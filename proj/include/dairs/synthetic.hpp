#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dairs/core.hpp"
#include "dairs/dataset.hpp"

namespace dairs {

/// Linearly separable binary problem with planted noise features and a
/// known set of label-flipped training rows.
struct PlantedOptions {
  std::size_t n_train = 300;
  std::size_t n_test = 200;
  std::size_t n_noise = 15;
  /// One weight per informative feature; y = [w . x + e > 0].
  std::vector<double> weights = {1.0, 1.0, 1.0, 1.0, 1.0};
  double label_noise = 0.25;
  /// Fraction of training rows whose label is inverted after generation.
  double flip_fraction = 0.1;
  /// Flip the rows lying farthest from the decision boundary rather than
  /// a uniformly random subset.
  bool flip_confident = false;
  std::uint64_t seed = 7;
};

struct PlantedData {
  SplitDataset data;
  /// Column index of each informative feature, in weight order.
  std::vector<std::size_t> informative;
  std::vector<std::size_t> noise;
  /// Training rows whose label was inverted.
  std::vector<std::size_t> flipped;
};

/// Builds the split directly (test rows are never flipped), then scales.
inline PlantedData make_planted(const PlantedOptions& opt = {}) {
  const std::size_t k = opt.weights.size();
  const std::size_t m = k + opt.n_noise;
  if (k == 0 || opt.n_train < 4 || opt.n_test < 2) throw Error("planted data too small");
  std::mt19937_64 rng(derive_seed(opt.seed, "planted"));
  PlantedData out;

  std::vector<std::size_t> columns(m);
  std::iota(columns.begin(), columns.end(), std::size_t{0});
  std::shuffle(columns.begin(), columns.end(), rng);
  out.informative.assign(columns.begin(), columns.begin() + static_cast<long>(k));
  out.noise.assign(columns.begin() + static_cast<long>(k), columns.end());
  std::sort(out.noise.begin(), out.noise.end());

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::string> names(m);
  for (std::size_t j = 0; j < m; ++j) names[j] = "x" + std::to_string(j);

  auto draw = [&](std::size_t rows, std::vector<double>& margin) {
    Dataset d;
    d.x = Matrix(rows, m);
    d.y.resize(rows);
    d.feature_names = names;
    d.class_labels = {"0", "1"};
    margin.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (auto j : out.noise) d.x(i, j) = uniform(rng);
      double z = 0.0;
      for (std::size_t q = 0; q < k; ++q) {
        const double v = gauss(rng);
        d.x(i, out.informative[q]) = v;
        z += opt.weights[q] * v;
      }
      margin[i] = z;
      d.y[i] = z + opt.label_noise * gauss(rng) > 0.0 ? 1 : 0;
    }
    return d;
  };

  std::vector<double> margin;
  out.data.train = draw(opt.n_train, margin);
  std::vector<double> unused;
  out.data.test = draw(opt.n_test, unused);
  out.data.seed = opt.seed;

  const auto n_flip = static_cast<std::size_t>(
      std::round(opt.flip_fraction * static_cast<double>(opt.n_train)));
  std::vector<std::size_t> order(opt.n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opt.flip_confident) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(margin[a]) > std::abs(margin[b]);
    });
  } else {
    std::shuffle(order.begin(), order.end(), rng);
  }
  out.flipped.assign(order.begin(), order.begin() + static_cast<long>(n_flip));
  std::sort(out.flipped.begin(), out.flipped.end());
  for (auto i : out.flipped) out.data.train.y[i] = 1 - out.data.train.y[i];

  scale_to_unit(out.data);
  return out;
}

}  // namespace dairs
