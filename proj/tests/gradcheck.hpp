#pragma once

// Central-difference gradient checks shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dairs/nn.hpp"

namespace gradcheck {

constexpr double kStep = 1e-5;
constexpr double kTolerance = 1e-4;
// Denominator floor: keeps the relative error meaningful for near-zero
// gradients, where central differences only carry ~1e-10 absolute accuracy.
constexpr double kFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

/// Worst relative error over `indices` of `params`, perturbing each in place.
inline double worst_error(std::span<double> params, std::span<const double> analytic,
                          const std::function<double()>& loss,
                          const std::vector<std::size_t>& indices) {
  double worst = 0.0;
  for (auto i : indices) {
    const double saved = params[i];
    params[i] = saved + kStep;
    const double up = loss();
    params[i] = saved - kStep;
    const double down = loss();
    params[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * kStep)));
  }
  return worst;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

template <class Rng>
std::vector<std::size_t> some_indices(std::size_t n, std::size_t k, Rng& rng) {
  if (k >= n) return all_indices(n);
  std::vector<std::size_t> v;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t i = 0; i < k; ++i) v.push_back(pick(rng));
  return v;
}

template <class Rng>
dairs::Matrix random_grid(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  dairs::Matrix g(n, n);
  for (auto& v : g.data) v = u(rng);
  return g;
}

template <class Rng>
std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double weighted_sum(std::span<const double> out, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

/// Worst relative error over every parameter block and the input grid of a
/// Q-network, for loss = c . Q(grid, cursor). `max_per_block` limits the
/// number of coordinates probed per block (0 = all).
template <class Rng>
double check_qnetwork(dairs::nn::QNetwork& net, std::size_t grid_size, Rng& rng,
                      std::size_t max_per_block = 0) {
  namespace nn = dairs::nn;
  auto grid = random_grid(grid_size, rng);
  auto cursor = random_vector(net.cursor_dim(), rng);
  const auto c = random_vector(net.num_actions(), rng);
  nn::QTrace trace;
  nn::q_forward(net, grid, cursor, trace);
  nn::QGradient grad(net);
  const auto grad_grid = nn::q_backward(net, trace, c, grad);
  auto loss = [&] { return weighted_sum(nn::q_forward(net, grid, cursor), c); };

  double worst = 0.0;
  auto params = net.parameters();
  auto grads = grad.blocks();
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto idx = max_per_block ? some_indices(params[b].size(), max_per_block, rng)
                                   : all_indices(params[b].size());
    worst = std::max(worst, worst_error(params[b], grads[b], loss, idx));
  }
  const auto idx = max_per_block ? some_indices(grid.data.size(), max_per_block, rng)
                                 : all_indices(grid.data.size());
  worst = std::max(worst, worst_error(grid.data, grad_grid.data, loss, idx));
  return worst;
}

}  // namespace gradcheck
