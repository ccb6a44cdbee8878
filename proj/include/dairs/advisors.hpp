#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "dairs/core.hpp"
#include "dairs/dataset.hpp"

namespace dairs {

// ---------------------------------------------------------------------------
// Random forest (Gini) and the feature advice derived from its importances.

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t samples = 0;
  double impurity = 0.0;
  /// Weighted impurity decrease credited to `feature` (0 for leaves).
  double decrease = 0.0;
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return static_cast<std::size_t>(d);
  }
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  /// Candidate features per split; 0 means floor(sqrt(m)), at least 1.
  std::size_t max_features = 0;
  bool bootstrap = true;
  std::size_t min_samples_split = 2;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  /// Non-negative, summing to 1.
  std::vector<double> importances;
};

inline double gini(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double child_impurity = INFINITY;
};

// Best threshold on one feature for the rows in `idx`; nullopt if constant.
inline std::optional<SplitChoice> best_threshold(const Dataset& data,
                                                 std::span<const std::size_t> idx,
                                                 std::size_t feature) {
  const std::size_t p = data.num_classes();
  std::vector<std::pair<double, int>> values;
  values.reserve(idx.size());
  for (auto i : idx) values.emplace_back(data.x(i, feature), data.y[i]);
  std::sort(values.begin(), values.end());
  if (values.front().first == values.back().first) return std::nullopt;

  std::vector<double> right(p, 0.0), left(p, 0.0);
  for (const auto& v : values) right[v.second] += 1.0;
  const double n = static_cast<double>(values.size());
  SplitChoice best;
  best.feature = static_cast<int>(feature);
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    left[values[k].second] += 1.0;
    right[values[k].second] -= 1.0;
    if (values[k].first == values[k + 1].first) continue;
    const double nl = static_cast<double>(k + 1);
    const double nr = n - nl;
    const double child = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
    if (child < best.child_impurity) {
      best.child_impurity = child;
      double mid = 0.5 * (values[k].first + values[k + 1].first);
      if (mid >= values[k + 1].first) mid = values[k].first;
      best.threshold = mid;
    }
  }
  return best;
}

}  // namespace detail

/// CART tree on the rows `sample` (duplicates allowed). Each node examines
/// up to `max_features` non-constant features in random order. Importance
/// decreases are added to `importance`.
template <class Rng>
DecisionTree fit_tree(const Dataset& data, std::vector<std::size_t> sample,
                      const ForestOptions& opt, std::size_t max_features, Rng& rng,
                      std::vector<double>& importance) {
  const std::size_t m = data.num_features();
  const std::size_t p = data.num_classes();
  const double total = static_cast<double>(sample.size());
  DecisionTree tree;

  struct Pending {
    std::vector<std::size_t> idx;
    int depth;
    int node;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back({});
  stack.push_back({std::move(sample), 0, 0});
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});

  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    std::vector<double> counts(p, 0.0);
    for (auto i : job.idx) counts[data.y[i]] += 1.0;
    const double n = static_cast<double>(job.idx.size());
    TreeNode node;
    node.samples = job.idx.size();
    node.impurity = gini(counts, n);
    node.depth = job.depth;

    const bool stop = static_cast<std::size_t>(job.depth) >= opt.max_depth ||
                      job.idx.size() < opt.min_samples_split || node.impurity <= 0.0;
    detail::SplitChoice best;
    if (!stop) {
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t examined = 0;
      for (std::size_t f : order) {
        if (examined == max_features) break;
        const auto choice = detail::best_threshold(data, job.idx, f);
        if (!choice) continue;
        ++examined;
        if (choice->child_impurity < best.child_impurity) best = *choice;
      }
    }
    const double gain = stop || best.feature < 0
                            ? 0.0
                            : (n / total) * (node.impurity - best.child_impurity);
    if (gain <= 1e-12) {
      tree.nodes[job.node] = node;
      continue;
    }

    node.feature = best.feature;
    node.threshold = best.threshold;
    node.decrease = gain;
    importance[best.feature] += gain;
    std::vector<std::size_t> left, right;
    for (auto i : job.idx) {
      (data.x(i, best.feature) <= best.threshold ? left : right).push_back(i);
    }
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    tree.nodes[job.node] = node;
    stack.push_back({std::move(right), job.depth + 1, node.right});
    stack.push_back({std::move(left), job.depth + 1, node.left});
  }
  return tree;
}

/// Importance of feature j: weighted Gini decrease summed over every node
/// splitting on j in every tree, normalised to sum 1 (uniform if no split).
template <class Rng>
ForestModel fit_random_forest(const Dataset& data, const ForestOptions& opt, Rng& rng) {
  const std::size_t m = data.num_features();
  const std::size_t n = data.num_instances();
  if (m == 0) throw Error("random forest needs at least one feature");
  std::vector<bool> seen(data.num_classes(), false);
  std::size_t distinct = 0;
  for (int c : data.y) {
    if (!seen[c]) {
      seen[c] = true;
      ++distinct;
    }
  }
  if (distinct < 2) throw Error("random forest needs at least two classes");

  const std::size_t k = opt.max_features > 0
                            ? std::min(opt.max_features, m)
                            : std::max<std::size_t>(1, static_cast<std::size_t>(
                                                           std::sqrt(static_cast<double>(m))));
  ForestModel model;
  model.importances.assign(m, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t t = 0; t < opt.n_trees; ++t) {
    std::vector<std::size_t> sample(n);
    if (opt.bootstrap) {
      for (auto& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    model.trees.push_back(fit_tree(data, std::move(sample), opt, k, rng, model.importances));
  }
  const double sum = std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
  for (auto& v : model.importances) {
    v = sum > 0.0 ? v / sum : 1.0 / static_cast<double>(m);
  }
  return model;
}

/// p_i = 1 if imp_i > beta / m, else m * imp_i; clipped to [0, 1].
inline std::vector<double> advice_probabilities(std::span<const double> importances,
                                                double beta) {
  const double m = static_cast<double>(importances.size());
  std::vector<double> p;
  p.reserve(importances.size());
  for (double imp : importances) {
    p.push_back(std::clamp(imp > beta / m ? 1.0 : m * imp, 0.0, 1.0));
  }
  return p;
}

/// Independent Bernoulli(p_i) draws.
template <class Rng>
std::vector<std::uint8_t> sample_feature_advice(std::span<const double> p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> advice(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) advice[i] = u(rng) < p[i] ? 1 : 0;
  return advice;
}

// ---------------------------------------------------------------------------
// Isolation forest and the per-class instance advice.

/// Exact harmonic number H(k).
inline double harmonic(std::size_t k) {
  double h = 0.0;
  for (std::size_t i = k; i >= 1; --i) h += 1.0 / static_cast<double>(i);
  return h;
}

/// Average unsuccessful-search path length in a BST of n points.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double nd = static_cast<double>(n);
  return 2.0 * harmonic(n - 1) - 2.0 * (nd - 1.0) / nd;
}

inline double score_from_path(double mean_path, std::size_t sample_size) {
  const double c = average_path_length(sample_size);
  if (c <= 0.0) return 0.5;
  return std::pow(2.0, -mean_path / c);
}

struct IsoNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t size = 0;
  int depth = 0;
};

struct IsoTree {
  std::vector<IsoNode> nodes;
  std::size_t height() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return static_cast<std::size_t>(d);
  }
};

struct IsoForestOptions {
  std::size_t n_trees = 100;
  std::size_t subsample = 256;
};

struct IsoForest {
  std::vector<IsoTree> trees;
  std::size_t sample_size = 0;
  std::size_t height_limit = 0;
};

inline std::size_t iso_height_limit(std::size_t sample_size) {
  std::size_t h = 0;
  while ((std::size_t{1} << h) < sample_size) ++h;
  return h;  // ceil(log2(sample_size))
}

/// Random non-constant feature, split uniform in [min, max); rows with
/// value < split go left. Stops at the height limit or when no feature varies.
template <class Rng>
IsoTree fit_isolation_tree(const Matrix& rows, std::vector<std::size_t> idx,
                           std::size_t height_limit, Rng& rng) {
  IsoTree tree;
  struct Pending {
    std::vector<std::size_t> idx;
    int depth;
    int node;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back({});
  stack.push_back({std::move(idx), 0, 0});
  std::vector<double> lo(rows.cols), hi(rows.cols);
  std::vector<std::size_t> varying;
  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    IsoNode node;
    node.size = job.idx.size();
    node.depth = job.depth;
    varying.clear();
    if (static_cast<std::size_t>(job.depth) < height_limit && job.idx.size() > 1) {
      for (std::size_t j = 0; j < rows.cols; ++j) {
        lo[j] = hi[j] = rows(job.idx.front(), j);
      }
      for (auto i : job.idx) {
        const auto r = rows.row(i);
        for (std::size_t j = 0; j < rows.cols; ++j) {
          lo[j] = std::min(lo[j], r[j]);
          hi[j] = std::max(hi[j], r[j]);
        }
      }
      for (std::size_t j = 0; j < rows.cols; ++j) {
        if (hi[j] > lo[j]) varying.push_back(j);
      }
    }
    if (varying.empty()) {
      tree.nodes[job.node] = node;
      continue;
    }
    const std::size_t f =
        varying[std::uniform_int_distribution<std::size_t>(0, varying.size() - 1)(rng)];
    double split = std::uniform_real_distribution<double>(lo[f], hi[f])(rng);
    if (split <= lo[f]) split = std::nextafter(lo[f], hi[f]);
    std::vector<std::size_t> left, right;
    for (auto i : job.idx) (rows(i, f) < split ? left : right).push_back(i);
    node.feature = static_cast<int>(f);
    node.threshold = split;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    tree.nodes[job.node] = node;
    stack.push_back({std::move(right), job.depth + 1, node.right});
    stack.push_back({std::move(left), job.depth + 1, node.left});
  }
  return tree;
}

/// Each tree is grown on min(subsample, rows) rows drawn without replacement.
template <class Rng>
IsoForest fit_isolation_forest(const Matrix& rows, const IsoForestOptions& opt, Rng& rng) {
  if (rows.rows < 2) throw Error("isolation forest needs at least two rows");
  IsoForest forest;
  forest.sample_size = std::min(opt.subsample, rows.rows);
  forest.height_limit = iso_height_limit(forest.sample_size);
  std::vector<std::size_t> all(rows.rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t t = 0; t < opt.n_trees; ++t) {
    for (std::size_t i = 0; i < forest.sample_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    std::vector<std::size_t> sample(all.begin(), all.begin() + static_cast<long>(forest.sample_size));
    forest.trees.push_back(fit_isolation_tree(rows, std::move(sample), forest.height_limit, rng));
  }
  return forest;
}

/// Depth of the leaf reached by `row`, plus c(size) for unresolved leaves.
inline double path_length(const IsoTree& tree, std::span<const double> row) {
  int at = 0;
  while (tree.nodes[at].feature >= 0) {
    const auto& n = tree.nodes[at];
    at = row[n.feature] < n.threshold ? n.left : n.right;
  }
  const auto& leaf = tree.nodes[at];
  return static_cast<double>(leaf.depth) + average_path_length(leaf.size);
}

inline double mean_path_length(const IsoForest& forest, std::span<const double> row) {
  if (forest.trees.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : forest.trees) total += path_length(t, row);
  return total / static_cast<double>(forest.trees.size());
}

/// s = 2^(-E[h] / c(sample_size)); near 1 is anomalous, 0.5 is typical.
inline double anomaly_score(const IsoForest& forest, std::span<const double> row) {
  return score_from_path(mean_path_length(forest, row), forest.sample_size);
}

struct InstanceAdvice {
  std::vector<std::uint8_t> actions;
  std::vector<double> scores;
};

/// Groups rows by class, fits one isolation forest per group and advises
/// deselecting rows whose score exceeds `threshold`. Each group's forest
/// draws from a seed keyed by its class label. Groups with fewer than two
/// rows are advised selected.
inline InstanceAdvice instance_advice(const Dataset& train, double threshold,
                                      const IsoForestOptions& opt, std::uint64_t seed) {
  const std::size_t n = train.num_instances();
  InstanceAdvice advice{std::vector<std::uint8_t>(n, 1), std::vector<double>(n, 0.0)};
  for (std::size_t c = 0; c < train.num_classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (train.y[i] == static_cast<int>(c)) members.push_back(i);
    }
    if (members.size() < 2) continue;
    Matrix group(members.size(), train.num_features());
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto src = train.x.row(members[k]);
      std::copy(src.begin(), src.end(), group.row(k).begin());
    }
    std::mt19937_64 rng(derive_seed(seed, "isolation-forest/class=" + train.class_labels[c]));
    const auto forest = fit_isolation_forest(group, opt, rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double s = anomaly_score(forest, group.row(k));
      advice.scores[members[k]] = s;
      advice.actions[members[k]] = s > threshold ? 0 : 1;
    }
  }
  return advice;
}

// ---------------------------------------------------------------------------

struct AdvicePlan {
  std::vector<double> feature_probs;
  std::vector<std::uint8_t> instance_actions;
  std::vector<double> instance_scores;
  std::size_t advice_steps_features = 0;
  std::size_t advice_steps_instances = 0;
};

/// Plain-text dump: two comma-separated tables separated by '#' headings.
inline void write_advice_plan(std::ostream& os, const AdvicePlan& plan) {
  os << "# feature advice, steps=" << plan.advice_steps_features << "\n";
  os << "index,probability\n";
  for (std::size_t j = 0; j < plan.feature_probs.size(); ++j) {
    os << j << ',' << format_number(plan.feature_probs[j]) << '\n';
  }
  os << "# instance advice, steps=" << plan.advice_steps_instances << "\n";
  os << "index,action,score\n";
  for (std::size_t i = 0; i < plan.instance_actions.size(); ++i) {
    const double s = i < plan.instance_scores.size() ? plan.instance_scores[i] : 0.0;
    os << i << ',' << static_cast<int>(plan.instance_actions[i]) << ',' << format_number(s)
       << '\n';
  }
}

}  // namespace dairs
