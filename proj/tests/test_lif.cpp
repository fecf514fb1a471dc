#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spkseq/error.hpp"
#include "spkseq/lif.hpp"
#include "spkseq/ssm.hpp"

using namespace spkseq;
using namespace spkseq::lif;

TEST(Lif, SubthresholdIntegration) {
  const LIFParams p{0.5, 1.0, ResetMode::subtract};
  const std::vector<double> in = {1.0, 1.0};
  const auto tr = lif_run(p, in);
  EXPECT_DOUBLE_EQ(tr.membrane[0], 0.5);
  EXPECT_DOUBLE_EQ(tr.membrane[1], 0.75);
  EXPECT_EQ(tr.spikes[0], 0.0);
  EXPECT_EQ(tr.spikes[1], 0.0);
}

TEST(Lif, SubtractiveReset) {
  const LIFParams p{0.5, 0.4, ResetMode::subtract};
  LIFState s1 = lif_step(p, {}, 1.0);
  EXPECT_DOUBLE_EQ(s1.u, 0.5);
  EXPECT_TRUE(s1.spiked);
  LIFState s2 = lif_step(p, s1, 1.0);
  EXPECT_NEAR(s2.u, 0.55, 1e-15);
  EXPECT_TRUE(s2.spiked);
}

TEST(Lif, PureLeak) {
  const LIFParams p{0.8, 10.0, ResetMode::subtract};
  LIFState s{1.0, false};
  for (int t = 1; t <= 30; ++t) {
    s = lif_step(p, s, 0.0);
    EXPECT_NEAR(s.u, std::pow(0.8, t), 1e-14);
  }
}

TEST(Lif, KernelValues) {
  const auto k = lif_kernel({0.5, 1.0, ResetMode::none}, 3);
  EXPECT_DOUBLE_EQ(k[0], 0.5);
  EXPECT_DOUBLE_EQ(k[1], 0.25);
  EXPECT_DOUBLE_EQ(k[2], 0.125);
  for (double v : lif_kernel({1.0 - 1e-12, 1.0, ResetMode::none}, 10)) EXPECT_LT(v, 1e-11);
  EXPECT_THROW(lif_kernel({0.5, 1.0, ResetMode::subtract}, 3), UnsupportedMode);
}

TEST(Lif, RejectsBadBeta) {
  EXPECT_THROW(lif_step({1.0, 1.0, ResetMode::none}, {}, 1.0), ConfigError);
  EXPECT_THROW(lif_step({0.0, 1.0, ResetMode::none}, {}, 1.0), ConfigError);
  EXPECT_NEAR(LIFParams::from_time_constant(1.0, 2.0, 1.0, ResetMode::none).beta, std::exp(-0.5), 1e-15);
}

TEST(Lif, ResetFreeEqualsConvolution) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (double beta : {0.1, 0.5, 0.9}) {
    std::vector<double> in(256);
    for (auto& v : in) v = g(rng);
    const LIFParams p{beta, 0.0, ResetMode::none};
    const auto tr = lif_run(p, in);
    const auto ref = ssm::conv_naive(lif_kernel(p, in.size()), in);
    for (std::size_t t = 0; t < in.size(); ++t) EXPECT_NEAR(tr.membrane[t], ref[t], 1e-10);
  }
}

TEST(Lif, InfiniteThresholdMatchesResetFree) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> in(200);
  for (auto& v : in) v = 3.0 * g(rng);
  const auto a = lif_run({0.7, 1e300, ResetMode::subtract}, in);
  const auto b = lif_run({0.7, 1e300, ResetMode::none}, in);
  EXPECT_EQ(a.membrane, b.membrane);
}

TEST(Lif, MembraneBoundedByInput) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> in(500);
  double imax = 0.0;
  for (auto& v : in) {
    v = u(rng);
    imax = std::max(imax, std::abs(v));
  }
  for (auto v : lif_run({0.9, 0.0, ResetMode::none}, in).membrane) EXPECT_LE(std::abs(v), imax + 1e-12);
}
