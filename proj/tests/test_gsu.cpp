#include <gtest/gtest.h>

#include <random>

#include "spkseq/error.hpp"
#include "spkseq/gsu.hpp"
#include "test_util.hpp"

using namespace spkseq;
using namespace spkseq::gsu;

namespace {

GSULayerParams random_gsu(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  GSULayerParams p{d, k, std::vector<double>(d * k), std::vector<double>(k), std::vector<double>(k), 0.15};
  for (auto& v : p.W) v = g(rng);
  for (auto& v : p.b) v = g(rng);
  for (auto& v : p.c) v = g(rng);
  return p;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(Ternarize, HandValues) {
  const std::vector<double> x = {0.1, -0.5, 0.9};
  EXPECT_NEAR(ternary_threshold(x, 0.15), 0.135, 1e-15);
  EXPECT_EQ(ternarize(x, 0.15), (std::vector<std::int8_t>{0, -1, 1}));
  EXPECT_EQ(ternarize(std::vector<double>{0, 0, 0}, 0.15), (std::vector<std::int8_t>{0, 0, 0}));
  EXPECT_EQ(ternarize(std::vector<double>{1, 1, 1}, 0.15), (std::vector<std::int8_t>{1, 1, 1}));
  EXPECT_THROW(ternarize(std::vector<double>{}, 0.15), ShapeError);
}

TEST(Ternarize, Properties) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_vec(1 + trial % 17, rng);
    const auto t = ternarize(x, 0.15);
    for (auto v : t) EXPECT_TRUE(v == -1 || v == 0 || v == 1);
    // scale equivariance
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= 3.7;
    EXPECT_EQ(ternarize(scaled, 0.15), t);
    // monotone sparsity in alpha
    std::size_t prev_zeros = 0;
    for (double a = 0.05; a < 1.0; a += 0.1) {
      const auto tt = ternarize(x, a);
      const auto zeros = static_cast<std::size_t>(std::count(tt.begin(), tt.end(), 0));
      EXPECT_GE(zeros, prev_zeros);
      prev_zeros = zeros;
    }
  }
}

TEST(Gsu, HandExample) {
  GSULayerParams p{2, 2, {1, 0, 0, 1}, {0, 0}, {0, 0}, 0.15};
  const std::vector<double> x = {2, -2};
  const auto y = gsu_forward(p, x);
  EXPECT_EQ(y, (std::vector<double>{2, 2}));
  const std::vector<double> up = {1.0, 0.5};
  const auto g = gsu_backward(p, x, up);
  EXPECT_DOUBLE_EQ(g.b[0], 2.0);    // upstream * stream2
  EXPECT_DOUBLE_EQ(g.b[1], -1.0);
  EXPECT_DOUBLE_EQ(g.c[0], 1.0);    // upstream * stream1
  EXPECT_DOUBLE_EQ(g.c[1], -0.5);
}

TEST(Gsu, ZeroInputGivesBiasProduct) {
  std::mt19937_64 rng(3);
  const auto p = random_gsu(5, 4, rng);
  const auto y = gsu_forward(p, std::vector<double>(5, 0.0));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y[j], p.b[j] * p.c[j]);
  const auto g = gsu_backward(p, std::vector<double>(5, 1.0), std::vector<double>(4, 0.0));
  for (double v : g.x) EXPECT_EQ(v, 0.0);
  for (double v : g.W) EXPECT_EQ(v, 0.0);
  for (double v : g.b) EXPECT_EQ(v, 0.0);
  for (double v : g.c) EXPECT_EQ(v, 0.0);
}

TEST(Gsu, MatchesDenseOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_gsu(dim(rng), dim(rng), rng);
    const auto x = random_vec(p.in_dim, rng);
    EXPECT_LT(testutil::max_abs_diff(gsu_forward(p, x), gsu_forward_dense(p, x)), 1e-12);
  }
}

TEST(Gsu, OpCounts) {
  std::mt19937_64 rng(5);
  const auto p = random_gsu(8, 8, rng);
  const auto x = random_vec(8, rng);
  const auto c = audit_ops([&] { gsu_forward(p, x); }, "gsu");
  EXPECT_EQ(c.multiplies, 8u);
  EXPECT_EQ(c.label, "gsu");
  const auto z = audit_ops([&] { gsu_forward(p, std::vector<double>(8, 0.0)); });
  EXPECT_EQ(z.multiplies, 8u);
  EXPECT_EQ(z.adds, 16u);

  GLULayerParams g{8, 8, p.W, p.W, p.b, p.c};
  EXPECT_GE(audit_ops([&] { glu_forward(g, x); }).multiplies, 128u);

  for (std::size_t d : {1u, 4u, 64u}) {
    const auto q = random_gsu(d, 5, rng);
    EXPECT_EQ(audit_ops([&] { gsu_forward(q, random_vec(d, rng)); }).multiplies, 5u);
  }
}

TEST(Gsu, MixOpCountsPerRow) {
  std::mt19937_64 rng(6);
  Tensor x = testutil::random_tensor({2, 7, 6}, rng);
  Tensor W = testutil::random_tensor({6, 3}, rng);
  Tensor b(Shape{3}, 0.1), c(Shape{3}, -0.2);
  const auto cnt = audit_ops([&] { gsu::gsu_mix(x, W, b, c, 0.15); });
  EXPECT_EQ(cnt.multiplies, 14u * 3u);
}

TEST(Gsu, MixMatchesRowwiseForward) {
  std::mt19937_64 rng(7);
  const auto p = random_gsu(6, 4, rng);
  Tensor x = testutil::random_tensor({3, 6}, rng);
  Tensor y = gsu_mix(x, Tensor(Shape{6, 4}, p.W), Tensor(Shape{4}, p.b), Tensor(Shape{4}, p.c), 0.15);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto ref = gsu_forward(p, std::span<const double>(x.data().data() + r * 6, 6));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at(r * 4 + j), ref[j], 1e-13);
  }
}

TEST(Glu, HandValues) {
  GLULayerParams zero{3, 2, std::vector<double>(6, 0.4), std::vector<double>(6, -0.3), {0, 0}, {0, 0}};
  for (double v : glu_forward(zero, std::vector<double>(3, 0.0))) EXPECT_EQ(v, 0.0);
  GLULayerParams one{1, 1, {2.0}, {0.0}, {0.0}, {0.0}};
  EXPECT_DOUBLE_EQ(glu_forward(one, std::vector<double>{1.0})[0], 1.0);
  GLULayerParams sat{1, 1, {2.0}, {0.0}, {0.5}, {800.0}};
  EXPECT_DOUBLE_EQ(glu_forward(sat, std::vector<double>{1.5})[0], 3.5);
}

TEST(Gsu, Validation) {
  GSULayerParams p{2, 2, {1, 0, 0}, {0, 0}, {0, 0}, 0.15};
  EXPECT_THROW(gsu_forward(p, std::vector<double>{1, 2}), ShapeError);
  p.W.push_back(1);
  p.alpha_ter = 1.5;
  EXPECT_THROW(gsu_forward(p, std::vector<double>{1, 2}), ConfigError);
  p.alpha_ter = 0.15;
  EXPECT_THROW(gsu_forward(p, std::vector<double>{1, 2, 3}), ShapeError);
}
