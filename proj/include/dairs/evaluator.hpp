#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dairs/core.hpp"
#include "dairs/dataset.hpp"

namespace dairs {

/// Quality of a selected sub-matrix. Every field lies in [0, 1].
struct MetricVector {
  double accuracy = 0.0;
  double f1 = 0.0;
  double relevance = 0.0;
  double non_redundancy = 0.0;

  bool operator==(const MetricVector&) const = default;
};

/// Multinomial logistic regression; `weights` is classes x features.
struct LogisticModel {
  std::size_t classes = 0;
  std::size_t features = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::size_t epochs_run = 0;
};

struct LogisticOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.1;
  /// Stop once an epoch improves the loss by less than this.
  double tolerance = 1e-6;
};

namespace detail {

// Softmax of the logits for one row, written into `prob`.
inline void softmax_row(const LogisticModel& model, std::span<const double> x,
                        std::span<double> prob) {
  double top = -INFINITY;
  for (std::size_t c = 0; c < model.classes; ++c) {
    const double* w = model.weights.data() + c * model.features;
    double z = model.bias[c];
    for (std::size_t j = 0; j < model.features; ++j) z += w[j] * x[j];
    prob[c] = z;
    top = std::max(top, z);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < model.classes; ++c) {
    prob[c] = std::exp(prob[c] - top);
    total += prob[c];
  }
  for (std::size_t c = 0; c < model.classes; ++c) prob[c] /= total;
}

}  // namespace detail

inline std::vector<double> predict_proba(const LogisticModel& model,
                                         std::span<const double> x) {
  std::vector<double> prob(model.classes);
  detail::softmax_row(model, x, prob);
  return prob;
}

inline int predict(const LogisticModel& model, std::span<const double> x) {
  const auto prob = predict_proba(model, x);
  return static_cast<int>(std::max_element(prob.begin(), prob.end()) - prob.begin());
}

/// Full-batch gradient descent on mean cross-entropy from zero weights.
inline LogisticModel fit_logistic(const Matrix& x, std::span<const int> y,
                                  std::size_t num_classes,
                                  const LogisticOptions& opt = {}) {
  if (x.cols == 0) throw Error("logistic regression needs at least one feature");
  if (x.rows != y.size()) throw Error("shape mismatch: labels vs rows");
  std::vector<bool> seen(num_classes, false);
  std::size_t distinct = 0;
  for (int c : y) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw Error("class index out of range");
    }
    if (!seen[c]) {
      seen[c] = true;
      ++distinct;
    }
  }
  if (distinct < 2) throw Error("logistic regression needs at least two classes");

  LogisticModel model{num_classes, x.cols,
                      std::vector<double>(num_classes * x.cols, 0.0),
                      std::vector<double>(num_classes, 0.0), 0};
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  std::vector<double> prob(num_classes);
  std::vector<double> gw(model.weights.size());
  std::vector<double> gb(num_classes);
  double previous = INFINITY;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const auto row = x.row(i);
      detail::softmax_row(model, row, prob);
      loss -= std::log(std::max(prob[y[i]], 1e-300));
      prob[y[i]] -= 1.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double d = prob[c];
        gb[c] += d;
        double* g = gw.data() + c * x.cols;
        for (std::size_t j = 0; j < x.cols; ++j) g[j] += d * row[j];
      }
    }
    loss *= inv_n;
    if (previous - loss < opt.tolerance) break;
    previous = loss;
    for (std::size_t k = 0; k < gw.size(); ++k) {
      model.weights[k] -= opt.learning_rate * gw[k] * inv_n;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      model.bias[c] -= opt.learning_rate * gb[c] * inv_n;
    }
    model.epochs_run = epoch + 1;
  }
  return model;
}

struct Scores {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Accuracy and F1 macro-averaged over all classes (0 when P + R = 0).
inline Scores classification_scores(std::span<const int> truth,
                                    std::span<const int> predicted,
                                    std::size_t num_classes) {
  Scores s;
  if (truth.empty()) return s;
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) {
      ++correct;
      tp[truth[i]] += 1;
    } else {
      fp[predicted[i]] += 1;
      fn[truth[i]] += 1;
    }
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double p = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double r = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    total += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  s.f1 = total / static_cast<double>(num_classes);
  return s;
}

inline Scores evaluate(const LogisticModel& model, const Matrix& x,
                       std::span<const int> y) {
  if (x.cols != model.features) throw Error("shape mismatch: test columns vs model");
  std::vector<int> predicted(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) predicted[i] = predict(model, x.row(i));
  return classification_scores(y, predicted, model.classes);
}

/// Pearson correlation; 0 when either side has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n == 0 || b.size() != n) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace detail {

// Columns centred and scaled to unit norm; zero-variance columns stay zero.
inline Matrix standardized_columns(const Matrix& x) {
  Matrix z(x.cols, x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
    mean /= static_cast<double>(x.rows);
    double norm = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double d = x(i, j) - mean;
      z(j, i) = d;
      norm += d * d;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < x.rows; ++i) z(j, i) = norm > 0.0 ? z(j, i) / norm : 0.0;
  }
  return z;
}

}  // namespace detail

/// Mean |Pearson(feature, label index)| over the columns of `x`.
inline double relevance_score(const Matrix& x, std::span<const int> y) {
  if (x.cols == 0 || x.rows == 0) return 0.0;
  std::vector<double> label(y.begin(), y.end());
  std::vector<double> column(x.rows);
  double total = 0.0;
  for (std::size_t j = 0; j < x.cols; ++j) {
    for (std::size_t i = 0; i < x.rows; ++i) column[i] = x(i, j);
    total += std::abs(pearson(column, label));
  }
  return total / static_cast<double>(x.cols);
}

/// 1 - mean |Pearson| over unordered column pairs; 1 for a single column.
inline double non_redundancy_score(const Matrix& x) {
  if (x.cols < 2 || x.rows == 0) return x.cols == 1 ? 1.0 : 0.0;
  const Matrix z = detail::standardized_columns(x);
  double total = 0.0;
  for (std::size_t a = 0; a < x.cols; ++a) {
    const auto za = z.row(a);
    for (std::size_t b = a + 1; b < x.cols; ++b) {
      const auto zb = z.row(b);
      double dot = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) dot += za[i] * zb[i];
      total += std::min(std::abs(dot), 1.0);
    }
  }
  const double pairs = static_cast<double>(x.cols * (x.cols - 1) / 2);
  return std::clamp(1.0 - total / pairs, 0.0, 1.0);
}

struct MeasureOptions {
  LogisticOptions logistic;
};

/// Rows of `x` flagged in `rows` (all rows when empty), columns flagged in `cols`.
inline Matrix select(const Matrix& x, std::span<const std::uint8_t> rows,
                     std::span<const std::uint8_t> cols) {
  std::vector<std::size_t> keep_cols;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j]) keep_cols.push_back(j);
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.rows; ++i) n += rows.empty() || rows[i];
  Matrix out(n, keep_cols.size());
  std::size_t r = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (!rows.empty() && !rows[i]) continue;
    const auto src = x.row(i);
    auto dst = out.row(r++);
    for (std::size_t k = 0; k < keep_cols.size(); ++k) dst[k] = src[keep_cols[k]];
  }
  return out;
}

/// Fits on the selected train sub-matrix and scores on the feature-filtered
/// test partition (test rows are never filtered). Degenerate selections give
/// the all-zero vector.
inline MetricVector measure(const SplitDataset& data,
                            std::span<const std::uint8_t> features,
                            std::span<const std::uint8_t> instances,
                            const MeasureOptions& opt = {}) {
  const auto& train = data.train;
  if (features.size() != train.num_features() ||
      instances.size() != train.num_instances()) {
    throw Error("shape mismatch: selection mask vs dataset");
  }
  const std::size_t p = train.num_classes();
  std::size_t n_features = 0;
  for (auto f : features) n_features += f;
  std::vector<int> y_sel;
  std::vector<bool> seen(p, false);
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i]) continue;
    const int c = train.y[i];
    y_sel.push_back(c);
    if (!seen[c]) {
      seen[c] = true;
      ++distinct;
    }
  }
  if (n_features == 0 || distinct < 2 || y_sel.size() < std::max<std::size_t>(10, 2 * p)) {
    return {};
  }

  const Matrix x_sel = select(train.x, instances, features);
  const Matrix test_sel = select(data.test.x, {}, features);
  const auto model = fit_logistic(x_sel, y_sel, p, opt.logistic);
  const auto scores = evaluate(model, test_sel, data.test.y);
  MetricVector out;
  out.accuracy = scores.accuracy;
  out.f1 = scores.f1;
  out.relevance = relevance_score(x_sel, y_sel);
  out.non_redundancy = non_redundancy_score(x_sel);
  return out;
}

}  // namespace dairs
