#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hints/deeponet.hpp"
#include "hints/discretize.hpp"
#include "hints/error.hpp"
#include "hints/geometry.hpp"
#include "hints/linalg.hpp"

namespace hints {

enum class InnerMethod { gs, gmres };

inline std::string_view to_string(InnerMethod m) { return m == InnerMethod::gs ? "gs" : "gmres"; }

inline InnerMethod parse_inner_method(std::string_view s) {
  if (s == "gs") return InnerMethod::gs;
  if (s == "gmres") return InnerMethod::gmres;
  throw ConfigError("unknown inner method '" + std::string(s) + "' (expected gs or gmres)");
}

struct HintsConfig {
  int J = 10;
  double alpha = 0.3;
  double theta = 1.0;  ///< relaxation applied to the DeepONet correction
  InnerMethod inner = InnerMethod::gs;
  std::size_t m = 10;  ///< GMRES restart length
  double tol = 1e-12;
  std::size_t maxit = 10000;
  double std_floor = 1e-14;
  double diverge_above = 1e8;

  void validate() const {
    if (J < 1) throw ConfigError("hints: J must be >= 1");
    if (!(alpha > 0)) throw ConfigError("hints: alpha must be positive");
    if (!(tol > 0 && tol < 1)) throw ConfigError("hints: tol must lie in (0,1)");
    if (inner == InnerMethod::gmres && m < 1) throw ConfigError("hints: GMRES restart m must be >= 1");
  }
};

/// Population standard deviation of the real and imaginary parts, returned as
/// std(Re v) + i std(Im v).
inline Complex complex_std(const CVector& v) {
  if (v.size() == 0) throw DimensionError("complex_std: empty vector");
  const double n = static_cast<double>(v.size());
  Eigen::VectorXd re = v.real(), im = v.imag();
  double mr = re.sum() / n, mi = im.sum() / n;
  double vr = (re.array() - mr).square().sum() / n;
  double vi = (im.array() - mi).square().sum() / n;
  return {std::sqrt(vr), std::sqrt(vi)};
}

// --- sensor restriction ---------------------------------------------------------

/// Linear map from solve-grid unknowns to sensor values. Each unmasked sensor
/// takes the bilinear (1D: linear) interpolant of the surrounding unknowns,
/// with weights renormalized over the corners that are unknowns; a sensor on
/// a grid node copies that node. Masked sensors are 0.
struct Restriction {
  std::vector<std::vector<std::pair<std::size_t, double>>> weights;  ///< per sensor
  std::size_t empty_sensors = 0;  ///< unmasked sensors with no unknown nearby (set to 0)

  Eigen::VectorXd apply(const Eigen::VectorXd& dof_values) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(weights.size()));
    for (std::size_t s = 0; s < weights.size(); ++s) {
      double v = 0.0;
      for (const auto& [d, w] : weights[s]) v += w * dof_values(static_cast<Eigen::Index>(d));
      out(static_cast<Eigen::Index>(s)) = v;
    }
    return out;
  }
};

inline Restriction build_restriction(const ComplexSparseSystem& sys, const SensorSet& sensors) {
  if (sys.dim != sensors.dim) throw DimensionError("restriction: system and sensors differ in dimension");
  Restriction R;
  R.weights.resize(sensors.size());
  const double h = sys.h;
  auto dof_at = [&](long ix, long iy) -> std::ptrdiff_t {
    if (ix < 0 || iy < 0 || ix >= sys.n_side || iy >= sys.n_side) return -1;
    std::size_t node = sys.dim == 1 ? static_cast<std::size_t>(ix)
                                    : static_cast<std::size_t>(iy) * static_cast<std::size_t>(sys.n_side) + static_cast<std::size_t>(ix);
    return sys.node_to_dof[node];
  };
  auto snap = [&](double t, long& i0, double& frac) {
    double u = t / h;
    double r = std::round(u);
    if (std::abs(u - r) < 1e-9) {
      i0 = static_cast<long>(r);
      frac = 0.0;
    } else {
      i0 = static_cast<long>(std::floor(u));
      frac = u - static_cast<double>(i0);
    }
  };
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    if (!sensors.unmasked[s]) continue;
    const Point p = sensors.coords[s];
    long ix = 0, iy = 0;
    double fx = 0.0, fy = 0.0;
    snap(p.x, ix, fx);
    if (sys.dim == 2) snap(p.y, iy, fy);
    std::vector<std::pair<std::size_t, double>> w;
    double total = 0.0;
    for (int dy = 0; dy <= (sys.dim == 2 ? 1 : 0); ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        double wx = dx ? fx : 1.0 - fx;
        double wy = sys.dim == 2 ? (dy ? fy : 1.0 - fy) : 1.0;
        double wt = wx * wy;
        if (wt == 0.0) continue;
        auto d = dof_at(ix + dx, iy + dy);
        if (d < 0) continue;
        w.emplace_back(static_cast<std::size_t>(d), wt);
        total += wt;
      }
    if (w.empty()) {
      ++R.empty_sensors;
      continue;
    }
    for (auto& e : w) e.second /= total;
    R.weights[s] = std::move(w);
  }
  return R;
}

// --- correction operators --------------------------------------------------------

/// Approximate inverse applied to one real residual channel on the solve grid,
/// returning a complex correction on the same unknowns.
class CorrectionOperator {
 public:
  virtual ~CorrectionOperator() = default;
  virtual CVector apply(const Eigen::VectorXd& channel) const = 0;
};

class ZeroOperator final : public CorrectionOperator {
 public:
  CVector apply(const Eigen::VectorXd& channel) const override { return CVector::Zero(channel.size()); }
};

/// Exact inverse of A: a test stand-in for a perfect network.
class ExactInverseOperator final : public CorrectionOperator {
 public:
  explicit ExactInverseOperator(const CsrMatrix& A) : lu_(A.to_dense()) {}
  CVector apply(const Eigen::VectorXd& channel) const override { return lu_.solve(channel.cast<Complex>().eval()); }

 private:
  Eigen::PartialPivLU<CMatrix> lu_;
};

/// A trained model bound to one system: the sensor restriction and the trunk
/// outputs at every unknown are computed once.
class BoundDeepOnet final : public CorrectionOperator {
 public:
  BoundDeepOnet(const DeepOnetModel& model, SensorSet sensors, const ComplexSparseSystem& sys)
      : model_(&model), sensors_(std::move(sensors)) {
    ctx_ = model.context(sensors_);
    restriction_ = build_restriction(sys, sensors_);
    trunk_ = model.trunk(sys.dof_coords, sys.dof_distance, &counters_);
  }

  CVector apply(const Eigen::VectorXd& channel) const override {
    Eigen::VectorXd f = restriction_.apply(channel);
    auto b = model_->branch(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), ctx_, &counters_);
    return model_->combine(b, trunk_);
  }

  const Restriction& restriction() const { return restriction_; }
  const EvalCounters& counters() const { return counters_; }

 private:
  const DeepOnetModel* model_;
  SensorSet sensors_;
  BranchContext ctx_;
  Restriction restriction_;
  DeepOnetModel::TrunkOut trunk_;
  mutable EvalCounters counters_;
};

/// (s_R/α) N(α Re r / s_R) + i (s_I/α) N(α Im r / s_I); a channel whose
/// standard deviation is below std_floor contributes nothing.
inline CVector deeponet_correction(const CorrectionOperator& op, const CVector& r, double alpha, double std_floor = 1e-14) {
  CVector out = CVector::Zero(r.size());
  Complex s = complex_std(r);
  if (s.real() >= std_floor) {
    Eigen::VectorXd ch = r.real() * (alpha / s.real());
    out += (s.real() / alpha) * op.apply(ch);
  }
  if (s.imag() >= std_floor) {
    Eigen::VectorXd ch = r.imag() * (alpha / s.imag());
    out += Complex(0.0, s.imag() / alpha) * op.apply(ch);
  }
  return out;
}

// --- hybrid iteration ---------------------------------------------------------------

/// Called after every completed step with its phase and the current iterate
/// (and once up front with Phase::initial).
using StepObserver = std::function<void(Phase, const CVector&)>;

/// Step n = 1, 2, ...: a DeepONet correction when n mod J = 0, otherwise one
/// GS sweep or one GMRES(m) cycle warm-started from the current iterate.
inline SolveResult hints_iterate(const ComplexSparseSystem& sys, const CorrectionOperator& op, const HintsConfig& cfg,
                                 const CVector& x0, const StepObserver& observe = {}) {
  cfg.validate();
  const auto& A = sys.A;
  const auto& b = sys.rhs;
  detail::check_system(A, b, x0);
  SolveResult res;
  res.x = x0;
  auto& h = res.history;
  const double bn = b.norm() > 0 ? b.norm() : 1.0;
  double r = residual(A, b, res.x).norm() / bn;
  h.push(r, Phase::initial);
  if (observe) observe(Phase::initial, res.x);
  if (r <= cfg.tol) {
    h.outcome = Outcome::converged;
    return res;
  }
  std::vector<std::size_t> diag;
  if (cfg.inner == InnerMethod::gs) diag = diagonal_positions(A);

  std::size_t used = 0;
  for (long n = 1; used < cfg.maxit; ++n) {
    Phase phase;
    if (n % cfg.J == 0) {
      CVector rv = residual(A, b, res.x);
      res.x += cfg.theta * deeponet_correction(op, rv, cfg.alpha, cfg.std_floor);
      r = residual(A, b, res.x).norm() / bn;
      h.push(r, Phase::deeponet);
      phase = Phase::deeponet;
      ++used;
    } else if (cfg.inner == InnerMethod::gs) {
      gauss_seidel_sweep(A, res.x, b, diag);
      r = residual(A, b, res.x).norm() / bn;
      h.push(r, Phase::gs);
      phase = Phase::gs;
      ++used;
    } else {
      auto c = gmres_cycle(A, b, res.x, cfg.m, cfg.tol, h, cfg.maxit - used);
      used += std::max<std::size_t>(c.iterations, 1);
      r = c.relres;
      phase = Phase::gmres;
    }
    if (observe) observe(phase, res.x);
    if (r <= cfg.tol) {
      h.outcome = Outcome::converged;
      return res;
    }
    if (is_diverged(r, cfg.diverge_above)) {
      h.outcome = Outcome::diverged;
      return res;
    }
  }
  h.outcome = Outcome::max_iter;
  return res;
}

// --- spectral diagnostic ---------------------------------------------------------

/// |⟨e, v_j⟩|² for each orthonormal mode v_j.
inline std::vector<double> mode_spectrum(const CVector& e, const std::vector<SineMode>& modes) {
  std::vector<double> out;
  out.reserve(modes.size());
  for (const auto& m : modes) {
    if (m.vector.size() != e.size()) throw DimensionError("mode_spectrum: mode and error differ in length");
    Complex c = m.vector.cast<Complex>().dot(e);
    out.push_back(std::norm(c));
  }
  return out;
}

inline double band_energy(const std::vector<double>& spectrum, std::size_t j_lo, std::size_t j_hi) {
  double s = 0.0;
  for (std::size_t j = j_lo; j <= j_hi && j <= spectrum.size(); ++j) s += spectrum[j - 1];
  return s;
}

}  // namespace hints
