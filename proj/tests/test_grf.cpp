#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hints/geometry.hpp"
#include "hints/grf.hpp"

using namespace hints;

TEST(Covariance, DiagonalAndKernelValue) {
  std::vector<Point> pts{{0.0, 0.0}, {0.1, 0.0}, {0.0, 0.1}, {0.5, 0.5}};
  auto C = covariance_matrix(pts, {});
  EXPECT_DOUBLE_EQ(C(0, 0), 0.1 + 1e-10);
  EXPECT_NEAR(C(0, 1), 0.1 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(C(0, 1), 0.06065306597, 1e-11);
  EXPECT_EQ(C(0, 1), C(0, 2));  // isotropy
  EXPECT_TRUE(C.isApprox(C.transpose(), 0.0));
  EXPECT_THROW(covariance_matrix(pts, {0.0, 0.1, 1e-10}), ConfigError);
}

TEST(Sampler, SensorGridFactorizes) {
  auto s = build_sensor_set(parse_geometry("unit_square"));
  GrfSampler sampler(s.coords, {});
  EXPECT_EQ(sampler.size(), 225u);
  EXPECT_LE(sampler.jitter(), 1e-6);
  auto C = covariance_matrix(s.coords, {0.1, 0.1, sampler.jitter()});
  EXPECT_LT((sampler.factor() * sampler.factor().transpose() - C).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampler, VanishingAmplitudeGivesZeroField) {
  std::mt19937_64 rng(1);
  auto f = sample(interval_points(20), GrfConfig{1e-30, 0.1, 0.0}, rng);
  EXPECT_LT(f.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Sampler, EmpiricalVarianceAndCorrelation) {
  std::vector<Point> pts{{0.5, 0.5}, {0.6, 0.5}, {0.2, 0.8}};
  GrfSampler sampler(pts, {});
  std::mt19937_64 rng(42);
  const int n = 10000;
  double s00 = 0, s11 = 0, s01 = 0;
  for (int i = 0; i < n; ++i) {
    auto f = sampler.sample(rng);
    s00 += f(0) * f(0);
    s11 += f(1) * f(1);
    s01 += f(0) * f(1);
  }
  EXPECT_NEAR(s00 / n, 0.1, 0.005);
  EXPECT_NEAR(s01 / std::sqrt(s00 * s11), std::exp(-0.5), 0.05);
}

TEST(Sampler1d, StdMeanAndSeedDependence) {
  GrfSampler sampler(interval_points(30), grf_config_1d(0.02));
  std::mt19937_64 rng(7);
  const int n = 10000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double v = sampler.sample(rng)(10);
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 0.02, 0.002);
  EXPECT_LT(std::abs(mean), 3 * 0.02 / std::sqrt(double(n)));

  std::mt19937_64 a(1), b(2);
  EXPECT_GT((sample_1d(30, 0.02, a) - sample_1d(30, 0.02, b)).norm(), 0.0);
  std::mt19937_64 c(1), d(1);
  EXPECT_EQ(sample_1d(30, 0.02, c), sample_1d(30, 0.02, d));
}
