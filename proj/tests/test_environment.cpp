#include <gtest/gtest.h>

#include <random>

#include "dairs/environment.hpp"

using namespace dairs;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.data) v = u(rng);
  return m;
}

std::vector<std::uint8_t> random_bits(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint8_t> b(n);
  for (auto& v : b) v = static_cast<std::uint8_t>(rng() & 1);
  return b;
}

// Direct block mean over explicit row and column ranges.
double block_mean(const Matrix& h, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  double s = 0.0;
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) s += h(i, j);
  return s / static_cast<double>((r1 - r0) * (c1 - c0));
}

}  // namespace

TEST(Scan, Modulo) {
  EXPECT_EQ(scan_index(7, 5), 2u);
  EXPECT_EQ(scan_index(0, 5), 0u);
  EXPECT_EQ(scan_index(5, 5), 0u);
  EXPECT_THROW(scan_index(3, 0), Error);
}

TEST(ApplyActions, WritesTheScanPosition) {
  auto mask = SelectionMask::full(3, 4);
  mask.step = 4;
  apply_actions(mask, 0, 1);
  EXPECT_EQ(mask.features, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(mask.instances, (std::vector<std::uint8_t>{1, 1, 1, 1}));
  EXPECT_EQ(mask.step, 5u);
}

TEST(ApplyActions, RewritingTheCurrentBitOnlyAdvances) {
  auto mask = SelectionMask::full(3, 4);
  mask.features[0] = 0;
  const auto before = mask;
  apply_actions(mask, 0, 1);
  EXPECT_EQ(mask.features, before.features);
  EXPECT_EQ(mask.instances, before.instances);
  EXPECT_EQ(mask.step, 1u);
}

TEST(ApplyActions, FullScanOfOnesRestoresTheRecord) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    SelectionMask mask{random_bits(4, rng), random_bits(7, rng), rng() % 50};
    for (int k = 0; k < 7; ++k) apply_actions(mask, 1, 1);
    EXPECT_EQ(mask.instances, std::vector<std::uint8_t>(7, 1));
    EXPECT_EQ(mask.features, std::vector<std::uint8_t>(4, 1));
  }
}

TEST(ApplyActions, SingleAgentModesLeaveTheOtherRecord) {
  auto mask = SelectionMask::full(2, 3);
  for (int k = 0; k < 6; ++k) apply_actions(mask, 0, 0, EnvMode::feature_only);
  EXPECT_EQ(mask.features, (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(mask.instances, (std::vector<std::uint8_t>{1, 1, 1}));
  mask = SelectionMask::full(2, 3);
  for (int k = 0; k < 6; ++k) apply_actions(mask, 0, 0, EnvMode::instance_only);
  EXPECT_EQ(mask.features, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(mask.instances, (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(ApplyActions, EveryBitIsWrittenAfterMPlusNSteps) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng() % 9, n = 1 + rng() % 13;
    SelectionMask mask{std::vector<std::uint8_t>(m, 2), std::vector<std::uint8_t>(n, 2), rng() % 100};
    for (std::size_t k = 0; k < m + n; ++k)
      apply_actions(mask, static_cast<int>(rng() & 1), static_cast<int>(rng() & 1));
    for (auto b : mask.features) ASSERT_LE(b, 1);
    for (auto b : mask.instances) ASSERT_LE(b, 1);
    const auto [fr, ir] = selection_ratio(mask);
    ASSERT_GE(fr, 0.0);
    ASSERT_LE(fr, 1.0);
    ASSERT_GE(ir, 0.0);
    ASSERT_LE(ir, 1.0);
  }
}

TEST(PaddedState, HandExample) {
  Matrix x(2, 2);
  x.data = {1, 2, 3, 4};
  const std::vector<std::uint8_t> f = {1, 0}, r = {0, 1};
  const auto h = padded_state_matrix(x, f, r);
  EXPECT_EQ(h.data, (std::vector<double>{0, 0, 3, 0}));
}

TEST(PaddedState, IdentityAndAnnihilation) {
  std::mt19937_64 rng(3);
  const auto x = random_matrix(6, 4, rng);
  EXPECT_EQ(padded_state_matrix(x, std::vector<std::uint8_t>(4, 1), std::vector<std::uint8_t>(6, 1)).data,
            x.data);
  const auto z = padded_state_matrix(x, std::vector<std::uint8_t>(4, 0), std::vector<std::uint8_t>(6, 1));
  for (double v : z.data) EXPECT_EQ(v, 0.0);
}

TEST(PaddedState, FlippingOneBitTouchesOneLine) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = random_matrix(7, 5, rng);
    auto f = random_bits(5, rng), r = random_bits(7, rng);
    const auto base = padded_state_matrix(x, f, r);
    const std::size_t j = rng() % 5, i = rng() % 7;

    auto f2 = f;
    f2[j] = 0;
    const auto hf = padded_state_matrix(x, f2, r);
    for (std::size_t a = 0; a < 7; ++a)
      for (std::size_t b = 0; b < 5; ++b) ASSERT_EQ(hf(a, b), b == j ? 0.0 : base(a, b));

    auto r2 = r;
    r2[i] = 0;
    const auto hr = padded_state_matrix(x, f, r2);
    for (std::size_t a = 0; a < 7; ++a)
      for (std::size_t b = 0; b < 5; ++b) ASSERT_EQ(hr(a, b), a == i ? 0.0 : base(a, b));
  }
}

TEST(PaddedState, ShapeMismatchThrows) {
  Matrix x(2, 3);
  EXPECT_THROW(padded_state_matrix(x, std::vector<std::uint8_t>(2, 1), std::vector<std::uint8_t>(2, 1)), Error);
}

TEST(StateGrid, ConstantInput) {
  Matrix h(9, 13, 0.25);
  const auto g = state_grid(h, 4);
  for (double v : g.data) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(StateGrid, EvenBlocks) {
  Matrix h(4, 4);
  for (std::size_t k = 0; k < 16; ++k) h.data[k] = static_cast<double>(k);
  const auto g = state_grid(h, 2);
  EXPECT_DOUBLE_EQ(g(0, 0), (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(g(0, 1), (2 + 3 + 6 + 7) / 4.0);
  EXPECT_DOUBLE_EQ(g(1, 0), (8 + 9 + 12 + 13) / 4.0);
  EXPECT_DOUBLE_EQ(g(1, 1), (10 + 11 + 14 + 15) / 4.0);
}

TEST(StateGrid, RaggedBlocks) {
  std::mt19937_64 rng(5);
  const auto h = random_matrix(5, 3, rng);
  const auto g = state_grid(h, 2);
  // Rows split 3 + 2, columns 2 + 1.
  EXPECT_NEAR(g(0, 0), block_mean(h, 0, 3, 0, 2), 1e-15);
  EXPECT_NEAR(g(0, 1), block_mean(h, 0, 3, 2, 3), 1e-15);
  EXPECT_NEAR(g(1, 0), block_mean(h, 3, 5, 0, 2), 1e-15);
  EXPECT_NEAR(g(1, 1), block_mean(h, 3, 5, 2, 3), 1e-15);
}

TEST(StateGrid, SmallerThanGridReplicates) {
  Matrix h(1, 2);
  h.data = {3, 5};
  const auto g = state_grid(h, 4);
  for (std::size_t a = 0; a < 4; ++a) {
    EXPECT_EQ(g(a, 0), 3.0);
    EXPECT_EQ(g(a, 1), 3.0);
    EXPECT_EQ(g(a, 2), 5.0);
    EXPECT_EQ(g(a, 3), 5.0);
  }
}

TEST(StateGrid, MaskedFormMatchesTheTwoStepForm) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 60, m = 1 + rng() % 40, grid = 2 + rng() % 10;
    const auto x = random_matrix(n, m, rng);
    const auto f = random_bits(m, rng), r = random_bits(n, rng);
    const auto a = state_grid(padded_state_matrix(x, f, r), grid);
    const auto b = masked_state_grid(x, f, r, grid);
    for (std::size_t k = 0; k < a.data.size(); ++k) ASSERT_NEAR(a.data[k], b.data[k], 1e-12);
  }
}

TEST(Reward, WorkedExample) {
  const MetricVector prev{0.50, 0.9, 0.20, 0.30}, curr{0.62, 0.1, 0.20, 0.36};
  EXPECT_NEAR(compute_reward(prev, curr), 0.06, 1e-15);
  EXPECT_EQ(compute_reward(prev, prev), 0.0);
}

TEST(Reward, F1IsNotRewarded) {
  const MetricVector prev{0.5, 0.1, 0.2, 0.3};
  MetricVector curr = prev;
  curr.f1 = 0.9;
  EXPECT_EQ(compute_reward(prev, curr), 0.0);
}

TEST(Reward, AccuracyOnly) {
  const MetricVector prev{0.50, 0.0, 0.20, 0.30}, curr{0.62, 0.0, 0.90, 0.10};
  EXPECT_EQ(compute_reward(prev, curr, MetricSet{true, false, false}), curr.accuracy - prev.accuracy);
  EXPECT_EQ(compute_reward(prev, curr, MetricSet{false, false, false}), 0.0);
}

TEST(Reward, Telescopes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int steps = 1 + static_cast<int>(rng() % 200);
    std::vector<MetricVector> path(steps + 1);
    for (auto& v : path) v = {u(rng), u(rng), u(rng), u(rng)};
    double sum = 0.0;
    for (int t = 1; t <= steps; ++t) sum += compute_reward(path[t - 1], path[t]);
    const auto& a = path.front();
    const auto& b = path.back();
    const double direct =
        ((b.accuracy - a.accuracy) + (b.relevance - a.relevance) + (b.non_redundancy - a.non_redundancy)) / 3.0;
    ASSERT_NEAR(sum, direct, 1e-12);
  }
}

TEST(SelectionRatio, Means) {
  SelectionMask mask{{1, 0, 1, 1}, {0, 0, 1}, 0};
  const auto [fr, ir] = selection_ratio(mask);
  EXPECT_DOUBLE_EQ(fr, 0.75);
  EXPECT_DOUBLE_EQ(ir, 1.0 / 3.0);
}
