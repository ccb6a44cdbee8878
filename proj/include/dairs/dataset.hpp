#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dairs/core.hpp"

namespace dairs {

/// Cells of a delimited file with the label column pulled out.
struct RawTable {
  std::vector<std::string> column_names;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> labels;
  std::string label_name;

  std::size_t num_rows() const { return rows.size(); }
  std::size_t num_columns() const { return column_names.size(); }
};

struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_labels;

  std::size_t num_instances() const { return x.rows; }
  std::size_t num_features() const { return x.cols; }
  std::size_t num_classes() const { return class_labels.size(); }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
};

struct CsvOptions {
  char delimiter = ',';
  /// Split on runs of blanks/tabs instead of `delimiter`.
  bool whitespace = false;
  bool header = true;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_line(const std::string& line,
                                           const CsvOptions& opt) {
  std::vector<std::string> cells;
  if (opt.whitespace) {
    std::istringstream in(line);
    std::string cell;
    while (in >> cell) cells.push_back(cell);
    return cells;
  }
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (c == opt.delimiter && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r';
  });
}

}  // namespace detail

/// Parses `text` as a finite double; the whole cell must be consumed.
inline std::optional<double> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() ||
      !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

/// Shortest decimal representation that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Reads a delimited table. `label_column` is matched against header names
/// first, then interpreted as a zero-based column index.
inline RawTable parse_table(std::istream& in, const std::string& label_column,
                            const CsvOptions& opt = {}) {
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::blank(line)) continue;
    lines.push_back(detail::split_line(line, opt));
  }
  if (lines.empty()) throw Error("table is empty");

  std::vector<std::string> names;
  std::size_t first_data = 0;
  if (opt.header) {
    names = lines.front();
    first_data = 1;
  } else {
    for (std::size_t j = 0; j < lines.front().size(); ++j) {
      names.push_back("c" + std::to_string(j));
    }
  }
  const std::size_t width = names.size();

  std::optional<std::size_t> label_idx;
  if (auto it = std::find(names.begin(), names.end(), label_column);
      it != names.end()) {
    label_idx = static_cast<std::size_t>(it - names.begin());
  } else if (auto idx = parse_number(label_column);
             idx && *idx >= 0 && std::floor(*idx) == *idx && *idx < width) {
    label_idx = static_cast<std::size_t>(*idx);
  }
  if (!label_idx) {
    throw Error("label column not found: '" + label_column + "'");
  }

  RawTable table;
  table.label_name = names[*label_idx];
  for (std::size_t j = 0; j < width; ++j) {
    if (j != *label_idx) table.column_names.push_back(names[j]);
  }
  for (std::size_t r = first_data; r < lines.size(); ++r) {
    const auto& cells = lines[r];
    if (cells.size() != width) {
      throw Error("ragged row " + std::to_string(r + 1) + ": expected " +
                  std::to_string(width) + " cells, found " +
                  std::to_string(cells.size()));
    }
    std::vector<std::string> row;
    row.reserve(width - 1);
    for (std::size_t j = 0; j < width; ++j) {
      if (cells[j].empty()) {
        throw Error("missing value at row " + std::to_string(r + 1) +
                    ", column '" + names[j] + "'");
      }
      if (j == *label_idx) {
        table.labels.push_back(cells[j]);
      } else {
        row.push_back(cells[j]);
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw Error("table has no data rows");
  return table;
}

inline RawTable load_csv(const std::string& path,
                         const std::string& label_column,
                         const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file: " + path);
  return parse_table(in, label_column, opt);
}

/// Column-wise encoding learned from one table and replayable on another.
/// Numeric columns pass through; categorical columns expand to one indicator
/// per category, in first-appearance order.
class Encoder {
 public:
  struct Column {
    std::string name;
    bool categorical = false;
    std::vector<std::string> categories;
  };

  static Encoder fit(const RawTable& table) {
    Encoder enc;
    for (std::size_t j = 0; j < table.num_columns(); ++j) {
      Column col{table.column_names[j], false, {}};
      std::size_t numeric = 0;
      for (const auto& row : table.rows) {
        if (parse_number(row[j])) ++numeric;
      }
      if (numeric != 0 && numeric != table.num_rows()) {
        throw Error("column '" + col.name +
                    "' mixes numeric and categorical values");
      }
      if (numeric == 0) {
        col.categorical = true;
        for (const auto& row : table.rows) {
          if (std::find(col.categories.begin(), col.categories.end(), row[j]) ==
              col.categories.end()) {
            col.categories.push_back(row[j]);
          }
        }
      }
      enc.columns_.push_back(std::move(col));
    }

    std::vector<std::string> distinct;
    bool numeric_labels = true;
    for (const auto& l : table.labels) {
      if (std::find(distinct.begin(), distinct.end(), l) == distinct.end()) {
        distinct.push_back(l);
        numeric_labels = numeric_labels && parse_number(l).has_value();
      }
    }
    if (numeric_labels) {
      std::stable_sort(distinct.begin(), distinct.end(),
                       [](const std::string& a, const std::string& b) {
                         return *parse_number(a) < *parse_number(b);
                       });
    }
    if (distinct.size() < 2) throw Error("labels contain fewer than 2 classes");
    enc.classes_ = std::move(distinct);
    return enc;
  }

  /// Unseen categories map to all-zero indicators; unseen labels are an error.
  Dataset transform(const RawTable& table) const {
    if (table.num_columns() != columns_.size()) {
      throw Error("table has " + std::to_string(table.num_columns()) +
                  " feature columns, encoder expects " +
                  std::to_string(columns_.size()));
    }
    Dataset ds;
    for (const auto& col : columns_) {
      if (!col.categorical) {
        ds.feature_names.push_back(col.name);
      } else {
        for (const auto& c : col.categories) {
          ds.feature_names.push_back(col.name + "=" + c);
        }
      }
    }
    ds.class_labels = classes_;
    ds.x = Matrix(table.num_rows(), ds.feature_names.size());
    for (std::size_t i = 0; i < table.num_rows(); ++i) {
      std::size_t out = 0;
      for (std::size_t j = 0; j < columns_.size(); ++j) {
        const auto& col = columns_[j];
        const auto& cell = table.rows[i][j];
        if (!col.categorical) {
          const auto v = parse_number(cell);
          if (!v) {
            throw Error("non-numeric value '" + cell + "' in numeric column '" +
                        col.name + "'");
          }
          ds.x(i, out++) = *v;
        } else {
          for (const auto& c : col.categories) {
            ds.x(i, out++) = (c == cell) ? 1.0 : 0.0;
          }
        }
      }
      const auto it =
          std::find(classes_.begin(), classes_.end(), table.labels[i]);
      if (it == classes_.end()) {
        throw Error("unknown class label '" + table.labels[i] + "'");
      }
      ds.y.push_back(static_cast<int>(it - classes_.begin()));
    }
    return ds;
  }

  /// Maps an encoded row back to one cell per original column. Categorical
  /// columns recover their category (empty when every indicator is zero).
  std::vector<std::string> decode_row(std::span<const double> encoded) const {
    std::vector<std::string> cells;
    std::size_t in = 0;
    for (const auto& col : columns_) {
      if (!col.categorical) {
        cells.push_back(format_number(encoded[in++]));
        continue;
      }
      std::string value;
      for (const auto& c : col.categories) {
        if (encoded[in++] > 0.5) value = c;
      }
      cells.push_back(value);
    }
    return cells;
  }

  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<std::string>& classes() const { return classes_; }

 private:
  std::vector<Column> columns_;
  std::vector<std::string> classes_;
};

inline Dataset encode(const RawTable& table) {
  return Encoder::fit(table).transform(table);
}

inline Dataset take_rows(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.class_labels = ds.class_labels;
  out.x = Matrix(rows.size(), ds.num_features());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = ds.x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.y.push_back(ds.y[rows[i]]);
  }
  return out;
}

inline std::size_t train_size(std::size_t n, double ratio) {
  // The epsilon keeps exact products such as 0.7 * 2600 from rounding up.
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
}

/// Seeded shuffle, then the first ceil(ratio * n) rows become train.
inline SplitDataset split(const Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error("split ratio must lie in (0, 1)");
  }
  const std::size_t n = ds.num_instances();
  if (n < 2 * ds.num_classes()) {
    throw Error("dataset has " + std::to_string(n) + " rows, need at least " +
                std::to_string(2 * ds.num_classes()));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = std::min(train_size(n, ratio), n - 1);
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_rows(order.begin() + n_train, order.end());

  SplitDataset out;
  out.seed = seed;
  out.train = take_rows(ds, train_rows);
  out.test = take_rows(ds, test_rows);

  std::vector<bool> seen(ds.num_classes(), false);
  for (int c : out.train.y) seen[c] = true;
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) {
      throw Error("class '" + ds.class_labels[c] +
                  "' is absent from the train partition");
    }
  }
  return out;
}

/// Per-column min/max from the train partition; applied to both partitions,
/// with test values clipped to [0, 1]. Constant columns become 0.
inline void scale_to_unit(SplitDataset& data) {
  const std::size_t m = data.train.num_features();
  std::vector<double> lo(m, 0.0);
  std::vector<double> hi(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    lo[j] = hi[j] = data.train.num_instances() ? data.train.x(0, j) : 0.0;
  }
  for (std::size_t i = 0; i < data.train.num_instances(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      lo[j] = std::min(lo[j], data.train.x(i, j));
      hi[j] = std::max(hi[j], data.train.x(i, j));
    }
  }
  auto apply = [&](Matrix& x, bool clip) {
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double range = hi[j] - lo[j];
        double v = range > 0.0 ? (x(i, j) - lo[j]) / range : 0.0;
        if (clip) v = std::clamp(v, 0.0, 1.0);
        x(i, j) = v;
      }
    }
  };
  apply(data.train.x, false);
  apply(data.test.x, true);
}

}  // namespace dairs
