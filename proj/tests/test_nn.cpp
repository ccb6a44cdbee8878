#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gradcheck.hpp"

using namespace dairs;
using namespace dairs::nn;

namespace {

// Direct same-padding sliding-window sum, one output map per call.
Matrix brute_convolve(const Matrix& grid, const std::vector<double>& f, std::size_t k,
                      double bias) {
  const long n = static_cast<long>(grid.rows);
  const long h = static_cast<long>(k / 2);
  Matrix out(grid.rows, grid.cols);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      double s = bias;
      for (long a = -h; a <= h; ++a) {
        for (long b = -h; b <= h; ++b) {
          if (i + a < 0 || i + a >= n || j + b < 0 || j + b >= n) continue;
          s += f[(a + h) * static_cast<long>(k) + (b + h)] * grid(i + a, j + b);
        }
      }
      out(i, j) = s;
    }
  }
  return out;
}

// Block means over explicitly listed row/column boundaries.
double block_mean(const Matrix& m, std::size_t r0, std::size_t r1, std::size_t c0,
                  std::size_t c1) {
  double s = 0.0;
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) s += m(i, j);
  return s / static_cast<double>((r1 - r0) * (c1 - c0));
}

DenseLayer layer_from(std::size_t in, std::size_t out, std::vector<double> w,
                      std::vector<double> b, Activation act) {
  return DenseLayer{in, out, std::move(w), std::move(b), act};
}

}  // namespace

TEST(Dense, IdentityRelu) {
  const auto l = layer_from(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::relu);
  const std::vector<double> x = {1, -2};
  EXPECT_EQ(dense_forward(l, x), (std::vector<double>{1, 0}));
}

TEST(Dense, ZeroWeightsReturnBias) {
  const auto l = layer_from(3, 1, {0, 0, 0}, {3}, Activation::identity);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto x = gradcheck::random_vector(3, rng, -5, 5);
    EXPECT_EQ(dense_forward(l, x), (std::vector<double>{3}));
  }
}

TEST(Dense, MatchesHandComputedProduct) {
  std::mt19937_64 rng(2);
  const auto l = make_dense(3, 4, Activation::identity, rng);
  auto bias = gradcheck::random_vector(4, rng);
  auto layer = l;
  layer.bias = bias;
  const auto x = gradcheck::random_vector(3, rng);
  const auto y = dense_forward(layer, x);
  for (std::size_t o = 0; o < 4; ++o) {
    double s = bias[o];
    for (std::size_t i = 0; i < 3; ++i) s += layer.weights[o * 3 + i] * x[i];
    EXPECT_NEAR(y[o], s, 1e-12);
  }
}

TEST(Dense, SparseInputPathAgreesWithDense) {
  std::mt19937_64 rng(3);
  const auto l = make_dense(40, 7, Activation::relu, rng);
  std::vector<double> x(40, 0.0);
  x[5] = 1.5;
  x[31] = -0.25;
  const auto y = dense_forward(l, x);
  for (std::size_t o = 0; o < 7; ++o) {
    const double s = l.weights[o * 40 + 5] * 1.5 + l.weights[o * 40 + 31] * -0.25;
    EXPECT_NEAR(y[o], std::max(0.0, s), 1e-15);
  }
  // Dense head followed by a one-hot tail.
  std::vector<double> z = gradcheck::random_vector(40, rng);
  std::fill(z.begin() + 20, z.end(), 0.0);
  z[33] = 1.0;
  const auto yz = dense_forward(l, z);
  for (std::size_t o = 0; o < 7; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < 40; ++i) s += l.weights[o * 40 + i] * z[i];
    EXPECT_NEAR(yz[o], std::max(0.0, s), 1e-12);
  }
}

TEST(Dense, ShapeMismatchThrows) {
  std::mt19937_64 rng(4);
  const auto l = make_dense(3, 2, Activation::relu, rng);
  EXPECT_THROW(dense_forward(l, std::vector<double>(4)), Error);
}

TEST(Dense, GlorotInitBounds) {
  std::mt19937_64 rng(5);
  const auto l = make_dense(30, 20, Activation::relu, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double w : l.weights) {
    EXPECT_LE(std::abs(w), bound);
  }
  for (double b : l.bias) EXPECT_EQ(b, 0.0);
}

TEST(Dense, LinearSquaredLossMatchesClosedForm) {
  std::mt19937_64 rng(6);
  auto l = make_dense(3, 2, Activation::identity, rng);
  const auto x = gradcheck::random_vector(3, rng);
  const std::vector<double> t = {0.3, -0.7};
  DenseTrace trace;
  const auto y = dense_forward(l, x, trace);
  std::vector<double> g = {2 * (y[0] - t[0]), 2 * (y[1] - t[1])};
  DenseGradient grad(l);
  dense_backward(l, trace, g, grad);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(grad.weights[o * 3 + i], 2 * (y[o] - t[o]) * x[i], 1e-14);
    }
    EXPECT_NEAR(grad.bias[o], 2 * (y[o] - t[o]), 1e-14);
  }
}

TEST(Dense, ReluBlocksGradientAtNegativePreActivation) {
  auto l = layer_from(1, 2, {1, -1}, {0, 0}, Activation::relu);
  DenseTrace trace;
  dense_forward(l, std::vector<double>{2.0}, trace);
  DenseGradient grad(l);
  const auto gin = dense_backward(l, trace, std::vector<double>{1.0, 1.0}, grad);
  EXPECT_EQ(grad.weights[1], 0.0);
  EXPECT_EQ(grad.bias[1], 0.0);
  EXPECT_EQ(grad.weights[0], 2.0);
  EXPECT_EQ(gin[0], 1.0);
}

TEST(Dense, FiniteDifferenceTwentyDraws) {
  std::mt19937_64 rng(7);
  for (int draw = 0; draw < 20; ++draw) {
    for (auto act : {Activation::relu, Activation::identity}) {
      auto l = make_dense(6, 5, act, rng);
      l.bias = gradcheck::random_vector(5, rng);
      auto x = gradcheck::random_vector(6, rng);
      const auto c = gradcheck::random_vector(5, rng);
      DenseTrace trace;
      dense_forward(l, x, trace);
      DenseGradient grad(l);
      const auto gin = dense_backward(l, trace, c, grad);
      auto loss = [&] { return gradcheck::weighted_sum(dense_forward(l, x), c); };
      EXPECT_LT(gradcheck::worst_error(l.weights, grad.weights, loss,
                                       gradcheck::all_indices(l.weights.size())),
                gradcheck::kTolerance);
      EXPECT_LT(gradcheck::worst_error(l.bias, grad.bias, loss, gradcheck::all_indices(5)),
                gradcheck::kTolerance);
      EXPECT_LT(gradcheck::worst_error(x, gin, loss, gradcheck::all_indices(6)),
                gradcheck::kTolerance);
    }
  }
}

TEST(Conv, OneByOneIdentityFilterGivesPooledInput) {
  std::mt19937_64 rng(8);
  ConvEncoder enc{1, 1, 2, {1.0}, {0.0}};
  const auto grid = gradcheck::random_grid(4, rng);
  const auto out = conv_forward(enc, grid);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_NEAR(out[0], block_mean(grid, 0, 2, 0, 2), 1e-15);
  EXPECT_NEAR(out[1], block_mean(grid, 0, 2, 2, 4), 1e-15);
  EXPECT_NEAR(out[2], block_mean(grid, 2, 4, 0, 2), 1e-15);
  EXPECT_NEAR(out[3], block_mean(grid, 2, 4, 2, 4), 1e-15);
}

TEST(Conv, ZeroInputGivesBias) {
  std::mt19937_64 rng(9);
  auto enc = make_conv(3, 3, 4, rng);
  enc.bias = {0.5, -1.0, 2.0};
  const auto out = conv_forward(enc, Matrix(6, 6));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(out[c * 16 + k], enc.bias[c]);
  }
}

TEST(Conv, MatchesBruteForceSlidingWindow) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    auto enc = make_conv(2, 3, 4, rng);
    enc.bias = gradcheck::random_vector(2, rng);
    const auto grid = gradcheck::random_grid(4, rng);
    const auto out = conv_forward(enc, grid);
    for (std::size_t c = 0; c < 2; ++c) {
      const std::vector<double> f(enc.filters.begin() + c * 9, enc.filters.begin() + c * 9 + 9);
      const auto ref = brute_convolve(grid, f, 3, enc.bias[c]);
      // Pool 4x4 -> 4x4 is the identity, so every output is one conv value.
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[c * 16 + i * 4 + j], ref(i, j), 1e-12);
    }
  }
}

TEST(Conv, RaggedPoolingMatchesBruteForceBlocks) {
  std::mt19937_64 rng(11);
  auto enc = make_conv(1, 5, 3, rng);
  enc.bias = {0.1};
  const auto grid = gradcheck::random_grid(7, rng);
  const auto ref = brute_convolve(grid, enc.filters, 5, 0.1);
  const auto out = conv_forward(enc, grid);
  // 7 positions onto 3 cells: {0,1,2}, {3,4}, {5,6}.
  const std::size_t b[] = {0, 3, 5, 7};
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_NEAR(out[a * 3 + c], block_mean(ref, b[a], b[a + 1], b[c], b[c + 1]), 1e-12);
}

TEST(Conv, PoolingPreservesTheMeanOnEvenCells) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto enc = make_conv(4, 3, 8, rng);
    enc.bias = gradcheck::random_vector(4, rng);
    const auto grid = gradcheck::random_grid(32, rng);
    const auto out = conv_forward(enc, grid);
    for (std::size_t c = 0; c < 4; ++c) {
      const std::vector<double> f(enc.filters.begin() + c * 9, enc.filters.begin() + c * 9 + 9);
      const auto ref = brute_convolve(grid, f, 3, enc.bias[c]);
      double full = 0.0, pooled = 0.0;
      for (double v : ref.data) full += v;
      for (std::size_t k = 0; k < 64; ++k) pooled += out[c * 64 + k];
      EXPECT_NEAR(pooled / 64.0, full / 1024.0, 1e-9);
    }
  }
}

TEST(Conv, NonSquareInputThrows) {
  std::mt19937_64 rng(13);
  const auto enc = make_conv(1, 3, 2, rng);
  EXPECT_THROW(conv_forward(enc, Matrix(4, 5)), Error);
  EXPECT_THROW(make_conv(1, 4, 2, rng), Error);
  EXPECT_THROW(make_conv(1, 3, 0, rng), Error);
}

TEST(Conv, FiniteDifferenceTwentyDraws) {
  std::mt19937_64 rng(14);
  const std::size_t shapes[][3] = {{3, 3, 8}, {5, 3, 7}, {3, 6, 4}, {1, 5, 9}};
  for (int draw = 0; draw < 20; ++draw) {
    const auto* s = shapes[draw % 4];
    auto enc = make_conv(2, s[0], s[1], rng);
    enc.bias = gradcheck::random_vector(2, rng);
    auto grid = gradcheck::random_grid(s[2], rng);
    const auto c = gradcheck::random_vector(enc.output_size(), rng);
    ConvGradient grad(enc);
    const auto gin = conv_backward(enc, grid, c, grad);
    auto loss = [&] { return gradcheck::weighted_sum(conv_forward(enc, grid), c); };
    EXPECT_LT(gradcheck::worst_error(enc.filters, grad.filters, loss,
                                     gradcheck::all_indices(enc.filters.size())),
              gradcheck::kTolerance);
    EXPECT_LT(gradcheck::worst_error(enc.bias, grad.bias, loss, gradcheck::all_indices(2)),
              gradcheck::kTolerance);
    EXPECT_LT(gradcheck::worst_error(grid.data, gin.data, loss,
                                     gradcheck::all_indices(grid.data.size())),
              gradcheck::kTolerance);
  }
}

TEST(QNetwork, DefaultShape) {
  std::mt19937_64 rng(15);
  const auto net = make_qnetwork(QNetworkShape{}, rng);
  EXPECT_EQ(net.encoder.output_size(), 256u);
  EXPECT_EQ(net.hidden.in, 256u);
  EXPECT_EQ(net.hidden.out, 512u);
  EXPECT_EQ(net.head.out, 2u);
  EXPECT_EQ(q_forward(net, Matrix(32, 32)).size(), 2u);
}

TEST(QNetwork, FiniteDifferenceTwentyDrawsSmallShape) {
  std::mt19937_64 rng(16);
  for (int draw = 0; draw < 20; ++draw) {
    QNetworkShape shape{2, 3, 3, 8, 2, static_cast<std::size_t>(draw % 2 ? 6 : 0)};
    auto net = make_qnetwork(shape, rng);
    for (auto& b : net.hidden.bias) b = 0.1;
    EXPECT_LT(gradcheck::check_qnetwork(net, 7, rng), gradcheck::kTolerance);
  }
}

TEST(QNetwork, ForwardIsDeterministic) {
  std::mt19937_64 rng(17);
  auto net = make_qnetwork(QNetworkShape{.cursor_dim = 5}, rng);
  const auto grid = gradcheck::random_grid(32, rng);
  const std::vector<double> cursor = {0, 0, 1, 0, 0};
  EXPECT_EQ(q_forward(net, grid, cursor), q_forward(net, grid, cursor));
  QTrace trace;
  EXPECT_EQ(q_forward(net, grid, cursor), q_forward(net, grid, cursor, trace));
}

TEST(Sgd, StepArithmetic) {
  std::vector<double> p = {1.0};
  sgd_step(p, std::vector<double>{2.0}, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 0.8);
  std::vector<double> q = {0.3, -1.0};
  sgd_step(q, std::vector<double>{0.0, 0.0}, 0.5);
  EXPECT_EQ(q, (std::vector<double>{0.3, -1.0}));
  std::vector<double> a = {1.0}, b = {1.0};
  const std::vector<double> g = {0.75};
  sgd_step(a, g, 0.05);
  sgd_step(a, g, 0.05);
  sgd_step(b, g, 0.1);
  EXPECT_NEAR(a[0], b[0], 1e-15);
}

TEST(Checkpoint, TextRoundTripIsBitExact) {
  std::mt19937_64 rng(18);
  auto net = make_qnetwork(QNetworkShape{.cursor_dim = 3}, rng);
  for (auto& b : net.hidden.bias) b = std::uniform_real_distribution<double>(-1, 1)(rng);
  net.head.bias = {1.0 / 3.0, -2e-300};
  std::stringstream ss;
  save_network(ss, net);
  const auto back = load_network(ss);
  EXPECT_EQ(back.encoder.filters, net.encoder.filters);
  EXPECT_EQ(back.encoder.bias, net.encoder.bias);
  EXPECT_EQ(back.encoder.pool, net.encoder.pool);
  EXPECT_EQ(back.hidden.weights, net.hidden.weights);
  EXPECT_EQ(back.hidden.bias, net.hidden.bias);
  EXPECT_EQ(back.head.weights, net.head.weights);
  EXPECT_EQ(back.head.bias, net.head.bias);
  EXPECT_EQ(back.cursor_dim(), 3u);
  std::stringstream again;
  save_network(again, back);
  std::stringstream first;
  save_network(first, net);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Checkpoint, MalformedFilesAreRejected) {
  std::stringstream bad("something else");
  EXPECT_THROW(read_arrays(bad), Error);
  std::stringstream truncated("dairs-arrays 1\narray x 1 3\n1 2\n");
  EXPECT_THROW(read_arrays(truncated), Error);
  std::stringstream no_end("dairs-arrays 1\narray x 1 1\n1\n");
  EXPECT_THROW(read_arrays(no_end), Error);
}
