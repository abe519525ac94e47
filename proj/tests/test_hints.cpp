#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hints/discretize.hpp"
#include "hints/hints.hpp"

using namespace hints;

namespace {
ComplexSparseSystem system_2d(const char* geometry, int n_side) {
  auto mask = build_grid_mask(parse_geometry(geometry), n_side);
  return assemble_2d(mask, std::sqrt(21.0), [](Point p) { return Complex(1.0 + p.x, 0.5 - p.y); });
}

ComplexSparseSystem system_1d(int n, double k = 25.0) {
  std::vector<double> one(static_cast<std::size_t>(n), 1.0);
  return assemble_1d(n, k, std::span<const double>(one));
}

CVector random_vector(Eigen::Index n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  CVector v(n);
  for (auto& x : v) x = Complex(nd(rng), nd(rng));
  return v;
}

/// Records how often it is applied; returns a fixed nonlinear function of the channel.
class CountingOperator final : public CorrectionOperator {
 public:
  CVector apply(const Eigen::VectorXd& c) const override {
    ++calls;
    CVector out(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) out(i) = Complex(std::tanh(c(i)), c(i) * c(i));
    return out;
  }
  mutable int calls = 0;
};
}  // namespace

TEST(ComplexStd, KnownValues) {
  CVector v(2);
  v << Complex(1.0, 0.0), Complex(3.0, 0.0);
  EXPECT_EQ(complex_std(v), Complex(1.0, 0.0));
  v << Complex(0.0, 1.0), Complex(0.0, 3.0);
  EXPECT_EQ(complex_std(v), Complex(0.0, 1.0));
  v << Complex(2.0, -5.0), Complex(2.0, -5.0);
  EXPECT_EQ(complex_std(v), Complex(0.0, 0.0));
  EXPECT_THROW(complex_std(CVector()), DimensionError);
}

TEST(Restriction, NestedGridCopiesNodes) {
  auto g = parse_geometry("unit_square");
  auto sensors = build_sensor_set(g);
  auto sys = system_2d("unit_square", 29);
  auto R = build_restriction(sys, sensors);
  EXPECT_EQ(R.empty_sensors, 0u);
  Eigen::VectorXd u = Eigen::VectorXd::Random(static_cast<Eigen::Index>(sys.size()));
  Eigen::VectorXd r = R.apply(u);
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    ASSERT_EQ(R.weights[s].size(), 1u);
    EXPECT_EQ(R.weights[s][0].second, 1.0);
    const auto& p = sys.dof_coords[R.weights[s][0].first];
    EXPECT_NEAR(p.x, sensors.coords[s].x, 1e-14);
    EXPECT_NEAR(p.y, sensors.coords[s].y, 1e-14);
    EXPECT_EQ(r(static_cast<Eigen::Index>(s)), u(static_cast<Eigen::Index>(R.weights[s][0].first)));
  }
}

TEST(Restriction, BilinearIsExactForLinearFields) {
  auto g = parse_geometry("unit_square");
  auto sensors = build_sensor_set(g);
  for (int n_side : {15, 20, 29, 41}) {
    auto sys = system_2d("unit_square", n_side);
    auto R = build_restriction(sys, sensors);
    Eigen::VectorXd u(static_cast<Eigen::Index>(sys.size()));
    for (std::size_t d = 0; d < sys.size(); ++d) u(static_cast<Eigen::Index>(d)) = sys.dof_coords[d].x + 2 * sys.dof_coords[d].y;
    Eigen::VectorXd r = R.apply(u);
    for (std::size_t s = 0; s < sensors.size(); ++s)
      EXPECT_NEAR(r(static_cast<Eigen::Index>(s)), sensors.coords[s].x + 2 * sensors.coords[s].y, 1e-12) << n_side;
  }
}

TEST(Restriction, MaskedSensorsReadZero) {
  auto g = parse_geometry("rect_minus_rect 0.25 0.25 0.5 0.5");
  auto sensors = build_sensor_set(g);
  auto sys = system_2d("rect_minus_rect 0.25 0.25 0.5 0.5", 29);
  auto R = build_restriction(sys, sensors);
  Eigen::VectorXd r = R.apply(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(sys.size())));
  for (std::size_t s = 0; s < sensors.size(); ++s)
    EXPECT_EQ(r(static_cast<Eigen::Index>(s)), sensors.unmasked[s] ? 1.0 : 0.0);
}

TEST(Restriction, OneDimensionalEveryOtherNode) {
  auto sensors = build_sensor_set_1d(30);
  auto sys = system_1d(61);
  auto R = build_restriction(sys, sensors);
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    ASSERT_EQ(R.weights[s].size(), 1u);
    EXPECT_EQ(R.weights[s][0].first, 2 * s + 1);
    EXPECT_EQ(R.weights[s][0].second, 1.0);
  }
  EXPECT_THROW(build_restriction(sys, build_sensor_set(parse_geometry("unit_square"))), DimensionError);
}

TEST(Correction, ZeroResidualGivesZero) {
  CountingOperator op;
  EXPECT_TRUE(deeponet_correction(op, CVector::Zero(10), 0.3).isZero(0.0));
  EXPECT_EQ(op.calls, 0);
}

TEST(Correction, PositiveScalingEquivariance) {
  CountingOperator op;
  CVector r = random_vector(40, 1);
  for (double c : {1e-6, 0.37, 7.3, 1e5}) {
    CVector a = deeponet_correction(op, c * r, 0.3);
    CVector b = c * deeponet_correction(op, r, 0.3);
    EXPECT_LT((a - b).norm() / b.norm(), 1e-13) << c;
  }
}

TEST(Correction, RealResidualSkipsImaginaryChannel) {
  CountingOperator op;
  CVector r = random_vector(12, 2).real().cast<Complex>();
  CVector out = deeponet_correction(op, r, 0.5);
  EXPECT_EQ(op.calls, 1);
  // Only the real channel contributes: out = (s/α) N(α r / s).
  double s = complex_std(r).real();
  CVector expect = (s / 0.5) * op.apply(r.real() * (0.5 / s));
  EXPECT_EQ(out, expect);
}

TEST(Correction, ExactInverseRecoversError) {
  auto sys = system_2d("l_shape 0.5 0.5", 15);
  ExactInverseOperator op(sys.A);
  CVector x = random_vector(static_cast<Eigen::Index>(sys.size()), 3);
  CVector r = residual(sys.A, sys.rhs, x);
  CVector exact = dense_solve(sys.A, sys.rhs);
  EXPECT_LT((x + deeponet_correction(op, r, 0.3) - exact).norm() / exact.norm(), 1e-10);
}

TEST(Hybrid, ExactInverseConvergesInOneStep) {
  auto sys = system_2d("rect_minus_rect 0.25 0.25 0.5 0.5", 15);
  ExactInverseOperator op(sys.A);
  HintsConfig cfg;
  cfg.J = 1;
  cfg.tol = 1e-10;
  auto r = hints_iterate(sys, op, cfg, CVector::Zero(static_cast<Eigen::Index>(sys.size())));
  EXPECT_EQ(r.history.outcome, Outcome::converged);
  EXPECT_EQ(r.history.iterations(), 1u);
  EXPECT_EQ(r.history.deeponet_iterations(), 1u);
}

TEST(Hybrid, ZeroOperatorReproducesGaussSeidel) {
  auto sys = system_1d(30, 3.0);
  HintsConfig cfg;
  cfg.J = 4;
  cfg.maxit = 40;
  cfg.tol = 1e-300;
  std::vector<CVector> gs_iterates;
  auto res = hints_iterate(sys, ZeroOperator{}, cfg, CVector::Zero(30), [&](Phase p, const CVector& x) {
    if (p == Phase::gs) gs_iterates.push_back(x);
  });
  EXPECT_EQ(res.history.deeponet_iterations(), 10u);
  EXPECT_EQ(res.history.classical_iterations(), 30u);
  CVector x = CVector::Zero(30);
  ASSERT_EQ(gs_iterates.size(), 30u);
  for (const auto& xi : gs_iterates) {
    x = gauss_seidel_sweep(sys.A, x, sys.rhs);
    EXPECT_EQ(x, xi);
  }
}

TEST(Hybrid, ZeroOperatorWithoutCorrectionStepsIsGmres) {
  auto sys = system_2d("rect_minus_rect 0.25 0.25 0.5 0.5", 15);
  HintsConfig cfg;
  cfg.inner = InnerMethod::gmres;
  cfg.m = 10;
  cfg.J = 1000000;
  cfg.tol = 1e-10;
  cfg.maxit = 20000;
  const CVector x0 = CVector::Zero(static_cast<Eigen::Index>(sys.size()));
  auto h = hints_iterate(sys, ZeroOperator{}, cfg, x0);
  SolverOptions opt;
  opt.tol = 1e-10;
  opt.maxit = 20000;
  auto g = gmres(sys.A, sys.rhs, x0, 10, opt);
  EXPECT_EQ(h.history.outcome, Outcome::converged);
  EXPECT_EQ(h.x, g.x);
  EXPECT_EQ(h.history.relres, g.history.relres);
  EXPECT_EQ(h.history.iterations(), g.history.iterations());
}

TEST(Hybrid, PhasePatternAndDivergence) {
  auto sys = system_1d(30);
  HintsConfig cfg;
  cfg.J = 3;
  auto res = hints_iterate(sys, ZeroOperator{}, cfg, CVector::Zero(30));
  EXPECT_EQ(res.history.outcome, Outcome::diverged);
  for (std::size_t i = 1; i < res.history.size(); ++i)
    EXPECT_EQ(res.history.phase[i], i % 3 == 0 ? Phase::deeponet : Phase::gs);
  cfg.J = 0;
  EXPECT_THROW(hints_iterate(sys, ZeroOperator{}, cfg, CVector::Zero(30)), ConfigError);
}

TEST(Hybrid, BoundModelEvaluatesTrunkOnce) {
  auto c = ModelConfig::defaults(Variant::masked, 1, 30);
  c.p = 5;
  c.branch_hidden = {6};
  c.trunk_hidden = {6};
  DeepOnetModel m(c);
  auto sys = system_1d(30);
  BoundDeepOnet op(m, build_sensor_set_1d(30), sys);
  for (int i = 0; i < 4; ++i) op.apply(Eigen::VectorXd::Random(30));
  EXPECT_EQ(op.counters().trunk_points, 30u);
  EXPECT_EQ(op.counters().branch_passes, 4u);
}

TEST(Spectrum, SingleAndDoubleModes) {
  auto modes = analytic_modes_1d(30, 25.0);
  CVector v1 = modes[0].vector.cast<Complex>();
  auto s = mode_spectrum(v1, modes);
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  for (std::size_t j = 1; j < s.size(); ++j) EXPECT_LT(s[j], 1e-24);

  CVector e = v1 + Complex(0.0, 2.0) * modes[4].vector.cast<Complex>();
  s = mode_spectrum(e, modes);
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_NEAR(s[4], 4.0, 1e-12);
  EXPECT_NEAR(band_energy(s, 1, 30), 5.0, 1e-12);
  EXPECT_NEAR(band_energy(s, 2, 4), 0.0, 1e-12);
}

TEST(Spectrum, Parseval) {
  auto modes = analytic_modes_1d(30, 25.0);
  for (unsigned seed = 0; seed < 5; ++seed) {
    CVector e = random_vector(30, seed);
    auto s = mode_spectrum(e, modes);
    EXPECT_NEAR(band_energy(s, 1, 30), e.squaredNorm(), 1e-12 * e.squaredNorm());
  }
  EXPECT_THROW(mode_spectrum(CVector::Zero(5), modes), DimensionError);
}
