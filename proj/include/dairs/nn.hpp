#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dairs/core.hpp"
#include "dairs/dataset.hpp"

namespace dairs::nn {

enum class Activation { relu, identity };

/// Fully connected layer; `weights` is out x in, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::identity;
};

struct DenseGradient {
  std::vector<double> weights;
  std::vector<double> bias;

  explicit DenseGradient(const DenseLayer& layer)
      : weights(layer.weights.size(), 0.0), bias(layer.bias.size(), 0.0) {}
};

/// Values kept from a forward pass for the matching backward pass.
struct DenseTrace {
  std::vector<double> input;
  std::vector<double> pre;
};

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <class Rng>
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0), act};
  const double bound = glorot_bound(in, out);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : layer.weights) w = dist(rng);
  return layer;
}

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw Error(std::string("shape mismatch: ") + what);
}

inline double activate(Activation a, double v) {
  return (a == Activation::relu && v < 0.0) ? 0.0 : v;
}

// Nonzero input positions. Inputs that are mostly zero (one-hot cursors)
// take a column-wise path; partly sparse ones skip the zeros.
inline bool mostly_zero(std::span<const double> x, std::vector<std::size_t>& nz) {
  nz.clear();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) nz.push_back(i);
  }
  return nz.size() * 4 < x.size();
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// Length of the prefix that holds every nonzero input.
inline std::size_t dense_prefix(std::span<const double> x, const std::vector<std::size_t>& nz,
                                std::size_t& tail_begin) {
  // Inputs are laid out as [dense features | sparse cursor]; find the first
  // position after which fewer than a quarter of the entries are nonzero.
  std::size_t k = nz.size();
  tail_begin = x.size();
  while (k > 0) {
    const std::size_t pos = nz[k - 1];
    const std::size_t after = x.size() - pos;
    if ((nz.size() - k + 1) * 4 >= after) break;
    --k;
    tail_begin = pos;
  }
  return k;
}

inline void affine(const DenseLayer& layer, std::span<const double> input,
                   std::span<double> pre) {
  thread_local std::vector<std::size_t> nz;
  if (mostly_zero(input, nz)) {
    std::copy(layer.bias.begin(), layer.bias.end(), pre.begin());
    for (std::size_t i : nz) {
      const double xi = input[i];
      for (std::size_t o = 0; o < layer.out; ++o) {
        pre[o] += layer.weights[o * layer.in + i] * xi;
      }
    }
    return;
  }
  // Dense head over [0, split), then the few nonzeros beyond it.
  std::size_t split = layer.in;
  const std::size_t head_nz = dense_prefix(input, nz, split);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* w = layer.weights.data() + o * layer.in;
    double acc = dot(w, input.data(), split);
    for (std::size_t k = head_nz; k < nz.size(); ++k) acc += w[nz[k]] * input[nz[k]];
    pre[o] = acc + layer.bias[o];
  }
}

}  // namespace detail

inline std::vector<double> dense_forward(const DenseLayer& layer,
                                         std::span<const double> input) {
  detail::check(input.size() == layer.in, "dense input length");
  std::vector<double> out(layer.out);
  detail::affine(layer, input, out);
  for (double& v : out) v = detail::activate(layer.activation, v);
  return out;
}

inline std::vector<double> dense_forward(const DenseLayer& layer,
                                         std::span<const double> input,
                                         DenseTrace& trace) {
  detail::check(input.size() == layer.in, "dense input length");
  trace.input.assign(input.begin(), input.end());
  trace.pre.resize(layer.out);
  detail::affine(layer, input, trace.pre);
  std::vector<double> out(layer.out);
  for (std::size_t o = 0; o < layer.out; ++o) {
    out[o] = detail::activate(layer.activation, trace.pre[o]);
  }
  return out;
}

/// Accumulates parameter gradients into `grad` and returns the gradient with
/// respect to the first `input_grad_dims` inputs (all inputs by default).
inline std::vector<double> dense_backward(const DenseLayer& layer,
                                          const DenseTrace& trace,
                                          std::span<const double> grad_out,
                                          DenseGradient& grad,
                                          std::size_t input_grad_dims = ~std::size_t{0}) {
  detail::check(grad_out.size() == layer.out, "dense output gradient length");
  detail::check(trace.input.size() == layer.in, "dense trace");
  std::vector<double> delta(layer.out);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const bool open = layer.activation == Activation::identity || trace.pre[o] > 0.0;
    delta[o] = open ? grad_out[o] : 0.0;
  }
  const std::size_t keep = std::min(input_grad_dims, layer.in);
  std::vector<double> grad_in(keep, 0.0);
  thread_local std::vector<std::size_t> nz;
  const bool sparse = detail::mostly_zero(trace.input, nz);
  std::size_t split = layer.in;
  const std::size_t head_nz = sparse ? 0 : detail::dense_prefix(trace.input, nz, split);
  const double* x = trace.input.data();
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double d = delta[o];
    grad.bias[o] += d;
    if (d == 0.0) continue;
    double* gw = grad.weights.data() + o * layer.in;
    const double* w = layer.weights.data() + o * layer.in;
    if (sparse) {
      for (std::size_t i : nz) gw[i] += d * x[i];
    } else {
      for (std::size_t i = 0; i < split; ++i) gw[i] += d * x[i];
      for (std::size_t k = head_nz; k < nz.size(); ++k) gw[nz[k]] += d * x[nz[k]];
    }
    for (std::size_t i = 0; i < keep; ++i) grad_in[i] += w[i] * d;
  }
  return grad_in;
}

/// Single-input-channel convolution (same padding, stride 1) followed by
/// average pooling onto a pool x pool grid per output channel.
struct ConvEncoder {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t pool = 0;
  std::vector<double> filters;  // channels x 1 x kernel x kernel
  std::vector<double> bias;     // channels

  std::size_t output_size() const { return channels * pool * pool; }
};

struct ConvGradient {
  std::vector<double> filters;
  std::vector<double> bias;

  explicit ConvGradient(const ConvEncoder& enc)
      : filters(enc.filters.size(), 0.0), bias(enc.bias.size(), 0.0) {}
};

template <class Rng>
ConvEncoder make_conv(std::size_t channels, std::size_t kernel, std::size_t pool,
                      Rng& rng) {
  if (kernel % 2 == 0) throw Error("convolution kernel size must be odd");
  if (pool == 0) throw Error("pool size must be at least 1");
  ConvEncoder enc{channels, kernel, pool,
                  std::vector<double>(channels * kernel * kernel),
                  std::vector<double>(channels, 0.0)};
  const double bound = glorot_bound(kernel * kernel, kernel * kernel * channels);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : enc.filters) w = dist(rng);
  return enc;
}

namespace detail {

inline void check_conv(const ConvEncoder& enc, const Matrix& grid) {
  if (grid.rows != grid.cols) throw Error("convolution input must be square");
  if (enc.kernel % 2 == 0) throw Error("convolution kernel size must be odd");
  check(enc.filters.size() == enc.channels * enc.kernel * enc.kernel,
        "conv filters");
  check(enc.bias.size() == enc.channels, "conv bias");
}

// Convolution and average pooling are both linear, so each pooled output is
// bias + sum_d f[d] * W[cell][d], where W[cell][d] is the mean of the grid
// window covered by the cell shifted by kernel offset d (zero padding).
// The window means are shared by all channels and come from prefix sums.
struct WindowMeans {
  std::size_t taps = 0;
  std::vector<double> mean;  // pool * pool cells x taps
};

inline WindowMeans window_means(const ConvEncoder& enc, const Matrix& grid) {
  const std::size_t n = grid.rows;
  const std::size_t k = enc.kernel;
  const long half = static_cast<long>(k / 2);
  const long ln = static_cast<long>(n);
  std::vector<double> prefix((n + 1) * (n + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += grid(i, j);
      prefix[(i + 1) * (n + 1) + j + 1] = prefix[i * (n + 1) + j + 1] + row;
    }
  }
  auto rect = [&](long r0, long r1, long c0, long c1) {
    r0 = std::clamp(r0, 0L, ln);
    r1 = std::clamp(r1, 0L, ln);
    c0 = std::clamp(c0, 0L, ln);
    c1 = std::clamp(c1, 0L, ln);
    if (r0 >= r1 || c0 >= c1) return 0.0;
    const auto at = [&](long r, long c) {
      return prefix[static_cast<std::size_t>(r) * (n + 1) + static_cast<std::size_t>(c)];
    };
    return at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0);
  };
  WindowMeans w{k * k, std::vector<double>(enc.pool * enc.pool * k * k)};
  for (std::size_t a = 0; a < enc.pool; ++a) {
    const auto [r0, r1] = cell_bounds(n, enc.pool, a);
    for (std::size_t b = 0; b < enc.pool; ++b) {
      const auto [c0, c1] = cell_bounds(n, enc.pool, b);
      const double area = static_cast<double>((r1 - r0) * (c1 - c0));
      double* out = w.mean.data() + (a * enc.pool + b) * w.taps;
      for (std::size_t di = 0; di < k; ++di) {
        const long dr = static_cast<long>(di) - half;
        for (std::size_t dj = 0; dj < k; ++dj) {
          const long dc = static_cast<long>(dj) - half;
          out[di * k + dj] = rect(static_cast<long>(r0) + dr, static_cast<long>(r1) + dr,
                                  static_cast<long>(c0) + dc, static_cast<long>(c1) + dc) /
                             area;
        }
      }
    }
  }
  return w;
}

}  // namespace detail

/// Flattened pooled map, channel-major, length channels * pool * pool.
inline std::vector<double> conv_forward(const ConvEncoder& enc, const Matrix& grid) {
  detail::check_conv(enc, grid);
  const auto w = detail::window_means(enc, grid);
  const std::size_t cells = enc.pool * enc.pool;
  std::vector<double> out(enc.output_size());
  for (std::size_t c = 0; c < enc.channels; ++c) {
    const double* f = enc.filters.data() + c * w.taps;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const double* m = w.mean.data() + cell * w.taps;
      double acc = enc.bias[c];
      for (std::size_t d = 0; d < w.taps; ++d) acc += f[d] * m[d];
      out[c * cells + cell] = acc;
    }
  }
  return out;
}

/// Accumulates filter/bias gradients; returns the gradient w.r.t. the grid.
inline Matrix conv_backward(const ConvEncoder& enc, const Matrix& grid,
                            std::span<const double> grad_out, ConvGradient& grad) {
  detail::check_conv(enc, grid);
  detail::check(grad_out.size() == enc.output_size(), "conv output gradient length");
  const std::size_t n = grid.rows;
  const std::size_t k = enc.kernel;
  const long half = static_cast<long>(k / 2);
  const auto w = detail::window_means(enc, grid);
  const std::size_t cells = enc.pool * enc.pool;

  // gmean[cell][d] = sum_c grad_out[c][cell] * f[c][d]: the gradient w.r.t.
  // each window mean, which is then spread back over its window.
  std::vector<double> gmean(cells * w.taps, 0.0);
  for (std::size_t c = 0; c < enc.channels; ++c) {
    const double* f = enc.filters.data() + c * w.taps;
    double* gf = grad.filters.data() + c * w.taps;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const double g = grad_out[c * cells + cell];
      if (g == 0.0) continue;
      grad.bias[c] += g;
      const double* m = w.mean.data() + cell * w.taps;
      double* gm = gmean.data() + cell * w.taps;
      for (std::size_t d = 0; d < w.taps; ++d) {
        gf[d] += g * m[d];
        gm[d] += g * f[d];
      }
    }
  }

  // Spread through a 2-D difference array, then integrate.
  const long ln = static_cast<long>(n);
  std::vector<double> diff((n + 1) * (n + 1), 0.0);
  auto add = [&](long r, long c, double v) {
    diff[static_cast<std::size_t>(r) * (n + 1) + static_cast<std::size_t>(c)] += v;
  };
  for (std::size_t a = 0; a < enc.pool; ++a) {
    const auto [r0, r1] = cell_bounds(n, enc.pool, a);
    for (std::size_t b = 0; b < enc.pool; ++b) {
      const auto [c0, c1] = cell_bounds(n, enc.pool, b);
      const double area = static_cast<double>((r1 - r0) * (c1 - c0));
      const double* gm = gmean.data() + (a * enc.pool + b) * w.taps;
      for (std::size_t di = 0; di < k; ++di) {
        const long dr = static_cast<long>(di) - half;
        const long lo_r = std::clamp(static_cast<long>(r0) + dr, 0L, ln);
        const long hi_r = std::clamp(static_cast<long>(r1) + dr, 0L, ln);
        if (lo_r >= hi_r) continue;
        for (std::size_t dj = 0; dj < k; ++dj) {
          const long dc = static_cast<long>(dj) - half;
          const long lo_c = std::clamp(static_cast<long>(c0) + dc, 0L, ln);
          const long hi_c = std::clamp(static_cast<long>(c1) + dc, 0L, ln);
          if (lo_c >= hi_c) continue;
          const double v = gm[di * k + dj] / area;
          add(lo_r, lo_c, v);
          add(lo_r, hi_c, -v);
          add(hi_r, lo_c, -v);
          add(hi_r, hi_c, v);
        }
      }
    }
  }
  Matrix grad_in(n, n);
  std::vector<double> col(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += diff[i * (n + 1) + j];
      col[j] += row;
      grad_in(i, j) = col[j];
    }
  }
  return grad_in;
}

inline void sgd_step(std::span<double> params, std::span<const double> grads,
                     double learning_rate) {
  detail::check(params.size() == grads.size(), "sgd parameter/gradient length");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

struct QNetworkShape {
  std::size_t channels = 4;
  std::size_t kernel = 3;
  std::size_t pool = 8;
  std::size_t hidden = 512;
  std::size_t actions = 2;
  /// Extra inputs appended to the pooled features (scan-cursor encoding).
  std::size_t cursor_dim = 0;
};

/// Conv encoder -> flatten -> Dense(hidden, relu) -> Dense(actions).
struct QNetwork {
  ConvEncoder encoder;
  DenseLayer hidden;
  DenseLayer head;

  std::size_t cursor_dim() const { return hidden.in - encoder.output_size(); }
  std::size_t num_actions() const { return head.out; }

  std::vector<std::span<double>> parameters() {
    return {encoder.filters, encoder.bias, hidden.weights, hidden.bias,
            head.weights, head.bias};
  }
  std::vector<std::span<const double>> parameters() const {
    return {encoder.filters, encoder.bias, hidden.weights, hidden.bias,
            head.weights, head.bias};
  }
};

struct QGradient {
  ConvGradient encoder;
  DenseGradient hidden;
  DenseGradient head;

  explicit QGradient(const QNetwork& net)
      : encoder(net.encoder), hidden(net.hidden), head(net.head) {}

  std::vector<std::span<double>> blocks() {
    return {encoder.filters, encoder.bias, hidden.weights, hidden.bias,
            head.weights, head.bias};
  }
  void zero() {
    for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
  }
};

struct QTrace {
  Matrix grid;
  DenseTrace hidden;
  DenseTrace head;
};

template <class Rng>
QNetwork make_qnetwork(const QNetworkShape& shape, Rng& rng) {
  QNetwork net;
  net.encoder = make_conv(shape.channels, shape.kernel, shape.pool, rng);
  const std::size_t features = net.encoder.output_size() + shape.cursor_dim;
  net.hidden = make_dense(features, shape.hidden, Activation::relu, rng);
  net.head = make_dense(shape.hidden, shape.actions, Activation::identity, rng);
  return net;
}

namespace detail {

inline std::vector<double> q_features(const QNetwork& net, const Matrix& grid,
                                      std::span<const double> cursor) {
  check(cursor.size() == net.cursor_dim(), "cursor length");
  auto features = conv_forward(net.encoder, grid);
  features.insert(features.end(), cursor.begin(), cursor.end());
  return features;
}

}  // namespace detail

inline std::vector<double> q_forward(const QNetwork& net, const Matrix& grid,
                                     std::span<const double> cursor = {}) {
  const auto features = detail::q_features(net, grid, cursor);
  return dense_forward(net.head, dense_forward(net.hidden, features));
}

inline std::vector<double> q_forward(const QNetwork& net, const Matrix& grid,
                                     std::span<const double> cursor, QTrace& trace) {
  trace.grid = grid;
  const auto features = detail::q_features(net, grid, cursor);
  const auto h = dense_forward(net.hidden, features, trace.hidden);
  return dense_forward(net.head, h, trace.head);
}

/// Backpropagates dLoss/dQ through the whole network, accumulating into `grad`.
/// Returns the gradient with respect to the input grid.
inline Matrix q_backward(const QNetwork& net, const QTrace& trace,
                         std::span<const double> grad_q, QGradient& grad) {
  const auto gh = dense_backward(net.head, trace.head, grad_q, grad.head);
  const auto gf = dense_backward(net.hidden, trace.hidden, gh, grad.hidden,
                                 net.encoder.output_size());
  return conv_backward(net.encoder, trace.grid, gf, grad.encoder);
}

inline void sgd_step(QNetwork& net, QGradient& grad, double learning_rate) {
  auto params = net.parameters();
  auto grads = grad.blocks();
  for (std::size_t b = 0; b < params.size(); ++b) {
    sgd_step(params[b], grads[b], learning_rate);
  }
}

// ---------------------------------------------------------------------------
// Parameter files.
//
//   dairs-arrays 1
//   array <name> <rank> <d0> ... <d{rank-1}>
//   <values, whitespace separated, shortest round-trip decimal>
//   ...
//   end
//
// Values are written with the shortest representation that parses back to
// the identical double, so a save/load cycle is bit-exact.

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

inline void write_arrays(std::ostream& os, const std::vector<NamedArray>& arrays) {
  os << "dairs-arrays 1\n";
  for (const auto& a : arrays) {
    std::size_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != a.values.size()) throw Error("array '" + a.name + "' shape/size mismatch");
    os << "array " << a.name << ' ' << a.shape.size();
    for (auto d : a.shape) os << ' ' << d;
    os << '\n';
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      os << format_number(a.values[i]) << ((i + 1) % 16 == 0 || i + 1 == a.values.size() ? '\n' : ' ');
    }
  }
  os << "end\n";
}

inline std::vector<NamedArray> read_arrays(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "dairs-arrays" || version != 1) {
    throw Error("not a dairs array file");
  }
  std::vector<NamedArray> arrays;
  while (is >> tag) {
    if (tag == "end") return arrays;
    if (tag != "array") throw Error("malformed array file near '" + tag + "'");
    NamedArray a;
    std::size_t rank = 0;
    is >> a.name >> rank;
    std::size_t count = 1;
    for (std::size_t r = 0; r < rank; ++r) {
      std::size_t d = 0;
      is >> d;
      a.shape.push_back(d);
      count *= d;
    }
    a.values.resize(count);
    std::string token;
    for (auto& v : a.values) {
      is >> token;
      const auto parsed = parse_number(token);
      if (!parsed) throw Error("bad value '" + token + "' in array '" + a.name + "'");
      v = *parsed;
    }
    if (!is) throw Error("truncated array file");
    arrays.push_back(std::move(a));
  }
  throw Error("array file missing 'end'");
}

inline void append_network(std::vector<NamedArray>& out, const QNetwork& net,
                           const std::string& prefix) {
  const auto& e = net.encoder;
  out.push_back({prefix + ".encoder.filters", {e.channels, 1, e.kernel, e.kernel}, e.filters});
  out.push_back({prefix + ".encoder.bias", {e.channels}, e.bias});
  out.push_back({prefix + ".encoder.pool", {1}, {static_cast<double>(e.pool)}});
  out.push_back({prefix + ".hidden.weights", {net.hidden.out, net.hidden.in}, net.hidden.weights});
  out.push_back({prefix + ".hidden.bias", {net.hidden.out}, net.hidden.bias});
  out.push_back({prefix + ".head.weights", {net.head.out, net.head.in}, net.head.weights});
  out.push_back({prefix + ".head.bias", {net.head.out}, net.head.bias});
}

inline QNetwork extract_network(const std::vector<NamedArray>& arrays,
                                const std::string& prefix) {
  auto find = [&](const std::string& suffix) -> const NamedArray& {
    for (const auto& a : arrays) {
      if (a.name == prefix + suffix) return a;
    }
    throw Error("array file lacks '" + prefix + suffix + "'");
  };
  QNetwork net;
  const auto& filters = find(".encoder.filters");
  if (filters.shape.size() != 4 || filters.shape[1] != 1 ||
      filters.shape[2] != filters.shape[3]) {
    throw Error("bad encoder filter shape");
  }
  net.encoder.channels = filters.shape[0];
  net.encoder.kernel = filters.shape[2];
  net.encoder.filters = filters.values;
  net.encoder.bias = find(".encoder.bias").values;
  net.encoder.pool = static_cast<std::size_t>(find(".encoder.pool").values.at(0));
  auto dense = [&](const std::string& name, Activation act) {
    const auto& w = find(name + ".weights");
    if (w.shape.size() != 2) throw Error("bad dense shape for " + name);
    DenseLayer layer{w.shape[1], w.shape[0], w.values, find(name + ".bias").values, act};
    if (layer.bias.size() != layer.out) throw Error("bad dense bias for " + name);
    return layer;
  };
  net.hidden = dense(".hidden", Activation::relu);
  net.head = dense(".head", Activation::identity);
  if (net.hidden.in < net.encoder.output_size() || net.head.in != net.hidden.out) {
    throw Error("inconsistent network shapes under '" + prefix + "'");
  }
  return net;
}

inline void save_network(std::ostream& os, const QNetwork& net) {
  std::vector<NamedArray> arrays;
  append_network(arrays, net, "net");
  write_arrays(os, arrays);
}

inline QNetwork load_network(std::istream& is) {
  return extract_network(read_arrays(is), "net");
}

}  // namespace dairs::nn
