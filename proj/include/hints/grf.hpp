#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hints/error.hpp"
#include "hints/geometry.hpp"

namespace hints {

/// Zero-mean field with covariance sigma * exp(-|xi - xj|^2 / (2 l^2)).
struct GrfConfig {
  double sigma = 0.1;
  double length = 0.1;
  double jitter = 1e-10;

  void validate() const {
    if (!(sigma > 0) || !(length > 0) || !(jitter >= 0))
      throw ConfigError("grf: sigma and length must be positive, jitter non-negative");
  }
};

inline Eigen::MatrixXd covariance_matrix(const std::vector<Point>& pts, const GrfConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd C(n, n);
  const double inv = 1.0 / (2.0 * cfg.length * cfg.length);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto& a = pts[static_cast<std::size_t>(i)];
      const auto& b = pts[static_cast<std::size_t>(j)];
      double d2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
      C(i, j) = C(j, i) = cfg.sigma * std::exp(-d2 * inv);
    }
  C.diagonal().array() += cfg.jitter;
  return C;
}

/// Caches the Cholesky factor of the covariance on a fixed point set.
class GrfSampler {
 public:
  GrfSampler(std::vector<Point> pts, const GrfConfig& cfg) : pts_(std::move(pts)), cfg_(cfg) {
    Eigen::MatrixXd C = covariance_matrix(pts_, cfg_);
    double jitter = cfg_.jitter;
    for (;;) {
      Eigen::LLT<Eigen::MatrixXd> llt(C);
      if (llt.info() == Eigen::Success) {
        L_ = llt.matrixL();
        break;
      }
      // Escalate the diagonal shift: 1e-10 -> 1e-9 -> ... -> 1e-6.
      double next = jitter > 0 ? jitter * 10 : 1e-10;
      if (next > 1e-6 * (1 + 1e-9))
        throw SolverError("grf: covariance is not positive definite after jitter " + std::to_string(jitter));
      C.diagonal().array() += next - jitter;
      jitter = next;
    }
    used_jitter_ = jitter;
  }

  template <typename Rng>
  Eigen::VectorXd sample(Rng& rng) const {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd z(L_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = nd(rng);
    return L_ * z;
  }

  const Eigen::MatrixXd& factor() const { return L_; }
  double jitter() const { return used_jitter_; }
  std::size_t size() const { return pts_.size(); }

 private:
  std::vector<Point> pts_;
  GrfConfig cfg_;
  Eigen::MatrixXd L_;
  double used_jitter_ = 0.0;
};

template <typename Rng>
Eigen::VectorXd sample(const std::vector<Point>& pts, const GrfConfig& cfg, Rng& rng) {
  return GrfSampler(pts, cfg).sample(rng);
}

/// Interior nodes x_i = i/(n+1) of (0,1), as 2D points on the x axis.
inline std::vector<Point> interval_points(int n) {
  std::vector<Point> pts;
  for (int i = 1; i <= n; ++i) pts.push_back({static_cast<double>(i) / (n + 1), 0.0});
  return pts;
}

/// 1D kernel with amplitude std^2 and length scale 0.1, so each value has
/// standard deviation `std`.
inline GrfConfig grf_config_1d(double std_dev) { return {std_dev * std_dev, 0.1, 1e-10}; }

template <typename Rng>
Eigen::VectorXd sample_1d(int n_points, double std_dev, Rng& rng) {
  if (n_points < 1) throw DimensionError("sample_1d: n_points must be >= 1");
  return GrfSampler(interval_points(n_points), grf_config_1d(std_dev)).sample(rng);
}

}  // namespace hints
