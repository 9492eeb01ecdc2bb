#include <gtest/gtest.h>

#include <cmath>

#include "vex/rng.hpp"
#include "vex/squashed_gaussian.hpp"

using namespace vex;

TEST(SquashedGaussian, StandardPointValue) {
  // m = 1, mean 0, log-std 0, noise 0: action tanh(0) = 0 and
  // log p = -log(2 pi)/2 - log(1 - tanh(0)^2) = -0.9189385332046727.
  SquashedGaussian<double> dist{Mat<double>::Zero(1, 1), Mat<double>::Zero(1, 1)};
  const auto s = sample_log_prob(dist, Mat<double>(Mat<double>::Zero(1, 1)));
  EXPECT_DOUBLE_EQ(s.action(0, 0), 0.0);
  EXPECT_NEAR(s.log_prob(0), -0.9189385332046727, 1e-12);
}

TEST(SquashedGaussian, ClampKeepsLogProbFinite) {
  Mat<double> raw(1, 1);
  raw << -1e6;  // degenerate variance before the clamp
  const Mat<double> log_std = clamp_log_std(raw);
  EXPECT_DOUBLE_EQ(log_std(0, 0), kLogStdMin);
  SquashedGaussian<double> dist{Mat<double>::Zero(1, 1), log_std};
  Mat<double> noise(1, 1);
  noise << 3.0;
  const auto s = sample_log_prob(dist, noise);
  EXPECT_TRUE(std::isfinite(s.log_prob(0)));
  EXPECT_GT(s.action(0, 0), -1.0);
  EXPECT_LT(s.action(0, 0), 1.0);
}

TEST(SquashedGaussian, DensityIntegratesToOne) {
  // Quadrature oracle: trapezoid rule over the action interval (-1, 1).
  Mat<double> mean(1, 1), log_std(1, 1);
  mean << 0.3;
  log_std << -0.2;
  const int n = 200001;
  const double lo = -1.0 + 1e-9, hi = 1.0 - 1e-9;
  const double h = (hi - lo) / (n - 1);
  double integral = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = lo + h * i;
    Vec<double> av(1);
    av << a;
    const double p = std::exp(log_prob_of_action(mean, log_std, 0, av));
    integral += (i == 0 || i == n - 1) ? 0.5 * p : p;
  }
  integral *= h;
  EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(SquashedGaussian, LogProbEqualsGaussianMinusJacobianExactly) {
  // Algebraic identity, recomputed directly from the unsquashed density and
  // the change-of-variables term.
  Rng rng(31, Stream::generic);
  const int m = 3;
  Mat<double> mean = rng.normal_mat<double>(4, m);
  Mat<double> log_std = clamp_log_std(Mat<double>(rng.normal_mat<double>(4, m)));
  const Mat<double> noise = rng.normal_mat<double>(4, m);
  const auto s = sample_log_prob(SquashedGaussian<double>{mean, log_std}, noise);
  for (Eigen::Index b = 0; b < 4; ++b) {
    double expected = 0.0;
    for (int d = 0; d < m; ++d) {
      const double u = mean(b, d) + std::exp(log_std(b, d)) * noise(b, d);
      const double gauss =
          -log_std(b, d) - 0.5 * noise(b, d) * noise(b, d) - 0.5 * std::log(2.0 * M_PI);
      expected += gauss - std::log(1.0 - std::tanh(u) * std::tanh(u));
    }
    EXPECT_NEAR(s.log_prob(b), expected, 1e-10);
    EXPECT_GE(s.log_prob(b), expected - 1e-10);  // never below the identity value
  }
}

TEST(SquashedGaussian, StableJacobianForExtremePretanh) {
  // Direct log(1 - tanh^2) underflows long before u = 30; the stable form
  // must stay finite and match the asymptote 2(log 2 - u).
  const double u = 30.0;
  const double stable = tanh_log_jacobian(u);
  EXPECT_TRUE(std::isfinite(stable));
  EXPECT_NEAR(stable, 2.0 * (std::log(2.0) - u), 1e-9);
  SquashedGaussian<double> dist{Mat<double>::Constant(1, 1, 25.0), Mat<double>::Zero(1, 1)};
  const auto s = sample_log_prob(dist, Mat<double>(Mat<double>::Constant(1, 1, 5.0)));
  EXPECT_TRUE(std::isfinite(s.log_prob(0)));
}

TEST(SquashedGaussian, NoiseShapeMismatchRejected) {
  SquashedGaussian<double> dist{Mat<double>::Zero(2, 1), Mat<double>::Zero(2, 1)};
  EXPECT_THROW(sample_log_prob(dist, Mat<double>(Mat<double>::Zero(3, 1))), ConfigError);
}
