#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <complex>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hints/error.hpp"
#include "hints/sparse.hpp"

namespace hints {

enum class Outcome { converged, diverged, max_iter, stagnated };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::converged: return "converged";
    case Outcome::diverged: return "diverged";
    case Outcome::max_iter: return "max_iter";
    case Outcome::stagnated: return "stagnated";
  }
  return "?";
}

/// What produced a history entry. `initial` and `restart` entries are true
/// residuals that do not count as iterations.
enum class Phase { initial, gs, jacobi, richardson, gmres, restart, deeponet };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::initial: return "initial";
    case Phase::gs: return "gs";
    case Phase::jacobi: return "jacobi";
    case Phase::richardson: return "richardson";
    case Phase::gmres: return "gmres";
    case Phase::restart: return "restart";
    case Phase::deeponet: return "deeponet";
  }
  return "?";
}

inline bool counts_as_iteration(Phase p) { return p != Phase::initial && p != Phase::restart; }

struct ResidualHistory {
  std::vector<double> relres;
  std::vector<Phase> phase;
  /// Index of the entry holding the true residual each GMRES cycle starts from.
  std::vector<std::size_t> cycle_begin;
  Outcome outcome = Outcome::max_iter;

  void push(double r, Phase p) {
    relres.push_back(r);
    phase.push_back(p);
  }
  std::size_t size() const { return relres.size(); }
  double last() const { return relres.empty() ? NAN : relres.back(); }

  std::size_t count(Phase p) const {
    std::size_t n = 0;
    for (auto q : phase) n += (q == p);
    return n;
  }
  std::size_t iterations() const {
    std::size_t n = 0;
    for (auto q : phase) n += counts_as_iteration(q);
    return n;
  }
  std::size_t classical_iterations() const { return iterations() - count(Phase::deeponet); }
  std::size_t deeponet_iterations() const { return count(Phase::deeponet); }

  /// Columns: iteration (cumulative counted steps), relres, phase.
  void write_csv(std::ostream& os) const {
    os << "iteration,relres,phase\n";
    std::size_t it = 0;
    char buf[64];
    for (std::size_t i = 0; i < relres.size(); ++i) {
      it += counts_as_iteration(phase[i]);
      std::snprintf(buf, sizeof buf, "%.17g", relres[i]);
      os << it << ',' << buf << ',' << to_string(phase[i]) << '\n';
    }
  }
};

struct SolverOptions {
  double tol = 1e-12;
  std::size_t maxit = 10000;
  double diverge_above = 1e8;
};

struct SolveResult {
  CVector x;
  ResidualHistory history;
};

inline bool is_diverged(double relres, double threshold = 1e8) { return !std::isfinite(relres) || relres > threshold; }

inline CVector matvec(const CsrMatrix& A, const CVector& x) {
  if (static_cast<std::size_t>(x.size()) != A.cols)
    throw DimensionError("matvec: matrix has " + std::to_string(A.cols) + " columns, vector has " +
                         std::to_string(x.size()) + " entries");
  CVector y(static_cast<Eigen::Index>(A.rows));
  for (std::size_t r = 0; r < A.rows; ++r) {
    Complex s{};
    for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) s += A.values[k] * x(static_cast<Eigen::Index>(A.col_idx[k]));
    y(static_cast<Eigen::Index>(r)) = s;
  }
  return y;
}

inline CVector residual(const CsrMatrix& A, const CVector& b, const CVector& x) { return b - matvec(A, x); }

/// ‖b − Ax‖ / ‖b‖, or the absolute residual when b = 0.
inline double relative_residual(const CsrMatrix& A, const CVector& b, const CVector& x) {
  double bn = b.norm();
  double rn = residual(A, b, x).norm();
  return bn > 0 ? rn / bn : rn;
}

/// Position of a_ii in the value array of each row.
inline std::vector<std::size_t> diagonal_positions(const CsrMatrix& A) {
  if (A.rows != A.cols) throw DimensionError("matrix is not square");
  std::vector<std::size_t> pos(A.rows);
  for (std::size_t r = 0; r < A.rows; ++r) {
    bool found = false;
    for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
      if (A.col_idx[k] == r) {
        if (A.values[k] == Complex{}) break;
        pos[r] = k;
        found = true;
        break;
      }
    if (!found) throw SolverError("zero diagonal entry in row " + std::to_string(r));
  }
  return pos;
}

namespace detail {
inline void check_system(const CsrMatrix& A, const CVector& b, const CVector& x) {
  if (A.rows != A.cols) throw DimensionError("matrix is not square");
  if (static_cast<std::size_t>(b.size()) != A.rows || static_cast<std::size_t>(x.size()) != A.rows)
    throw DimensionError("system of size " + std::to_string(A.rows) + " given vectors of size " +
                         std::to_string(b.size()) + " and " + std::to_string(x.size()));
}
}  // namespace detail

/// One forward Gauss-Seidel sweep in place.
inline void gauss_seidel_sweep(const CsrMatrix& A, CVector& x, const CVector& b, const std::vector<std::size_t>& diag) {
  for (std::size_t r = 0; r < A.rows; ++r) {
    Complex s = b(static_cast<Eigen::Index>(r));
    for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
      if (k != diag[r]) s -= A.values[k] * x(static_cast<Eigen::Index>(A.col_idx[k]));
    x(static_cast<Eigen::Index>(r)) = s / A.values[diag[r]];
  }
}

inline CVector gauss_seidel_sweep(const CsrMatrix& A, const CVector& x, const CVector& b) {
  detail::check_system(A, b, x);
  CVector y = x;
  gauss_seidel_sweep(A, y, b, diagonal_positions(A));
  return y;
}

inline CVector jacobi_sweep(const CsrMatrix& A, const CVector& x, const CVector& b, const std::vector<std::size_t>& diag) {
  CVector y(x.size());
  for (std::size_t r = 0; r < A.rows; ++r) {
    Complex s = b(static_cast<Eigen::Index>(r));
    for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
      if (k != diag[r]) s -= A.values[k] * x(static_cast<Eigen::Index>(A.col_idx[k]));
    y(static_cast<Eigen::Index>(r)) = s / A.values[diag[r]];
  }
  return y;
}

inline CVector jacobi_sweep(const CsrMatrix& A, const CVector& x, const CVector& b) {
  detail::check_system(A, b, x);
  return jacobi_sweep(A, x, b, diagonal_positions(A));
}

namespace detail {
/// Runs `step` until tol, maxit or divergence, recording the true residual after each step.
template <typename Step>
SolveResult stationary_loop(const CsrMatrix& A, const CVector& b, CVector x, const SolverOptions& opt, Phase phase,
                            Step&& step) {
  SolveResult res;
  const double bn = b.norm() > 0 ? b.norm() : 1.0;
  double r = residual(A, b, x).norm() / bn;
  res.history.push(r, Phase::initial);
  if (r <= opt.tol) {
    res.history.outcome = Outcome::converged;
    res.x = std::move(x);
    return res;
  }
  for (std::size_t it = 0; it < opt.maxit; ++it) {
    step(x);
    r = residual(A, b, x).norm() / bn;
    res.history.push(r, phase);
    if (r <= opt.tol) {
      res.history.outcome = Outcome::converged;
      break;
    }
    if (is_diverged(r, opt.diverge_above)) {
      res.history.outcome = Outcome::diverged;
      break;
    }
  }
  res.x = std::move(x);
  return res;
}
}  // namespace detail

inline SolveResult gauss_seidel(const CsrMatrix& A, const CVector& b, const CVector& x0, const SolverOptions& opt = {}) {
  detail::check_system(A, b, x0);
  auto diag = diagonal_positions(A);
  return detail::stationary_loop(A, b, x0, opt, Phase::gs, [&](CVector& x) { gauss_seidel_sweep(A, x, b, diag); });
}

inline SolveResult jacobi(const CsrMatrix& A, const CVector& b, const CVector& x0, const SolverOptions& opt = {}) {
  detail::check_system(A, b, x0);
  auto diag = diagonal_positions(A);
  return detail::stationary_loop(A, b, x0, opt, Phase::jacobi, [&](CVector& x) { x = jacobi_sweep(A, x, b, diag); });
}

using LinearOperator = std::function<CVector(const CVector&)>;

/// x ← x + θ Â(b − A x).
inline SolveResult richardson(const CsrMatrix& A, const CVector& b, const CVector& x0, const LinearOperator& precond,
                              double theta = 1.0, const SolverOptions& opt = {}) {
  detail::check_system(A, b, x0);
  return detail::stationary_loop(A, b, x0, opt, Phase::richardson, [&](CVector& x) {
    CVector c = precond(residual(A, b, x));
    if (c.size() != x.size()) throw DimensionError("richardson: preconditioner changed the vector size");
    x += theta * c;
  });
}

struct GmresCycle {
  std::size_t iterations = 0;
  double relres = 0.0;  ///< true residual after the cycle
  bool breakdown = false;
};

/// One restarted-GMRES cycle of at most m Arnoldi steps from the current x.
///
/// Appends one `gmres` entry (the Givens residual estimate) per Arnoldi step,
/// then a `restart` entry with the recomputed true residual. Stops early once
/// the estimate reaches tol or the Krylov space becomes invariant.
inline GmresCycle gmres_cycle(const CsrMatrix& A, const CVector& b, CVector& x, std::size_t m, double tol,
                              ResidualHistory& hist, std::size_t max_steps = SIZE_MAX) {
  const Eigen::Index n = static_cast<Eigen::Index>(A.rows);
  const double bn = b.norm() > 0 ? b.norm() : 1.0;
  GmresCycle out;
  CVector r = residual(A, b, x);
  double beta = r.norm();
  if (hist.size() == 0) hist.push(beta / bn, Phase::initial);
  hist.cycle_begin.push_back(hist.size() - 1);
  m = std::min({m, static_cast<std::size_t>(n), max_steps});
  if (beta == 0.0 || m == 0) {
    out.relres = beta / bn;
    hist.push(out.relres, Phase::restart);
    return out;
  }

  CMatrix V(n, static_cast<Eigen::Index>(m + 1));
  CMatrix H = CMatrix::Zero(static_cast<Eigen::Index>(m + 1), static_cast<Eigen::Index>(m));
  std::vector<double> cs(m);
  std::vector<Complex> sn(m);
  CVector g = CVector::Zero(static_cast<Eigen::Index>(m + 1));
  g(0) = beta;
  V.col(0) = r / beta;
  double est = beta;
  std::size_t j = 0;
  for (; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    CVector w = matvec(A, V.col(jj));
    for (Eigen::Index i = 0; i <= jj; ++i) {
      H(i, jj) = V.col(i).dot(w);
      w -= H(i, jj) * V.col(i);
    }
    double hn = w.norm();
    H(jj + 1, jj) = hn;
    const bool invariant = hn <= 1e-14 * H.col(jj).head(jj + 1).norm();
    if (!invariant) V.col(jj + 1) = w / hn;

    for (Eigen::Index i = 0; i < jj; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      Complex t = cs[iu] * H(i, jj) + sn[iu] * H(i + 1, jj);
      H(i + 1, jj) = -std::conj(sn[iu]) * H(i, jj) + cs[iu] * H(i + 1, jj);
      H(i, jj) = t;
    }
    // Complex Givens rotation zeroing H(j+1, j).
    Complex a = H(jj, jj);
    double babs = std::abs(H(jj + 1, jj));
    double aabs = std::abs(a);
    double nrm = std::hypot(aabs, babs);
    if (aabs == 0.0) {
      cs[j] = 0.0;
      sn[j] = std::conj(H(jj + 1, jj)) / babs;
    } else {
      cs[j] = aabs / nrm;
      sn[j] = (a / aabs) * std::conj(H(jj + 1, jj)) / nrm;
    }
    H(jj, jj) = cs[j] * a + sn[j] * H(jj + 1, jj);
    H(jj + 1, jj) = 0.0;
    g(jj + 1) = -std::conj(sn[j]) * g(jj);
    g(jj) = cs[j] * g(jj);
    est = std::min(est, std::abs(g(jj + 1)));
    hist.push(est / bn, Phase::gmres);
    if (invariant) {
      out.breakdown = true;
      ++j;
      break;
    }
    if (est / bn <= tol) {
      ++j;
      break;
    }
  }
  out.iterations = j;
  const auto k = static_cast<Eigen::Index>(j);
  CVector y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
  x += V.leftCols(k) * y;
  out.relres = residual(A, b, x).norm() / bn;
  hist.push(out.relres, Phase::restart);
  return out;
}

/// Restarted GMRES(m); restart = 0 means full GMRES (Krylov space up to n).
/// Iterations are counted as inner Arnoldi steps.
inline SolveResult gmres(const CsrMatrix& A, const CVector& b, const CVector& x0, std::size_t restart = 0,
                         const SolverOptions& opt = {}) {
  detail::check_system(A, b, x0);
  SolveResult res;
  res.x = x0;
  auto& h = res.history;
  const std::size_t m = restart == 0 ? A.rows : restart;
  const double bn = b.norm() > 0 ? b.norm() : 1.0;
  double prev = residual(A, b, res.x).norm() / bn;
  h.push(prev, Phase::initial);
  if (prev <= opt.tol) {
    h.outcome = Outcome::converged;
    return res;
  }
  std::size_t used = 0;
  while (used < opt.maxit) {
    auto c = gmres_cycle(A, b, res.x, m, opt.tol, h, opt.maxit - used);
    used += c.iterations;
    if (c.relres <= opt.tol) {
      h.outcome = Outcome::converged;
      return res;
    }
    if (is_diverged(c.relres, opt.diverge_above)) {
      h.outcome = Outcome::diverged;
      return res;
    }
    if (prev - c.relres < 1e-14 * prev) {
      h.outcome = Outcome::stagnated;
      return res;
    }
    prev = c.relres;
  }
  h.outcome = Outcome::max_iter;
  return res;
}

/// LU with partial pivoting. Throws SingularMatrixError when the matrix is
/// singular to working precision.
inline CVector dense_solve(const CMatrix& A, const CVector& b) {
  if (A.rows() != A.cols()) throw DimensionError("dense_solve: matrix is not square");
  if (A.rows() != b.size()) throw DimensionError("dense_solve: rhs has wrong length");
  Eigen::PartialPivLU<CMatrix> lu(A);
  const auto& U = lu.matrixLU();
  double umax = 0.0, umin = INFINITY;
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    umax = std::max(umax, std::abs(U(i, i)));
    umin = std::min(umin, std::abs(U(i, i)));
  }
  if (!(umin > 0.0) || umin < 1e-14 * umax || lu.rcond() < 1e-15)
    throw SingularMatrixError("dense_solve: matrix is singular to working precision");
  return lu.solve(b);
}

inline CVector dense_solve(const CsrMatrix& A, const CVector& b) { return dense_solve(A.to_dense(), b); }

}  // namespace hints
