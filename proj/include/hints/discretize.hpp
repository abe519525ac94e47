#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hints/error.hpp"
#include "hints/geometry.hpp"
#include "hints/io.hpp"
#include "hints/sparse.hpp"

namespace hints {

/// A := Δ_h + k², assembled on the unknowns of a 1D or 2D grid, together with
/// the right-hand side and the grid/unknown bookkeeping needed to move vectors
/// between the solve grid and the sensor lattice.
struct ComplexSparseSystem {
  CsrMatrix A;
  CVector rhs;
  int dim = 1;
  double h = 0.0;
  double k = 0.0;
  /// Grid nodes per axis (1D: n+2 including both Dirichlet ends).
  int n_side = 0;
  std::vector<std::size_t> dof_to_node;
  std::vector<std::ptrdiff_t> node_to_dof;  ///< -1 where the node is not an unknown
  std::vector<Point> dof_coords;
  std::vector<double> dof_distance;  ///< signed distance to the boundary at each unknown

  std::size_t size() const { return A.rows; }
};

/// Dirichlet problem on (0,1) with n interior unknowns, h = 1/(n+1).
inline ComplexSparseSystem assemble_1d(int n, double k, std::span<const Complex> f) {
  if (n < 2) throw AssemblyError("assemble_1d: n_interior must be >= 2");
  if (f.size() != static_cast<std::size_t>(n)) throw DimensionError("assemble_1d: f has wrong length");
  ComplexSparseSystem s;
  s.dim = 1;
  s.h = 1.0 / (n + 1);
  s.k = k;
  s.n_side = n + 2;
  const double inv_h2 = 1.0 / (s.h * s.h);
  CsrBuilder b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (i > 0) b.add(static_cast<std::size_t>(i - 1), inv_h2);
    b.add(static_cast<std::size_t>(i), -2.0 * inv_h2 + k * k);
    if (i + 1 < n) b.add(static_cast<std::size_t>(i + 1), inv_h2);
    b.finish_row();
  }
  s.A = std::move(b).build();
  s.rhs = Eigen::Map<const CVector>(f.data(), n);
  s.node_to_dof.assign(static_cast<std::size_t>(n + 2), -1);
  for (int i = 0; i < n; ++i) {
    s.dof_to_node.push_back(static_cast<std::size_t>(i + 1));
    s.node_to_dof[static_cast<std::size_t>(i + 1)] = i;
    double x = (i + 1) * s.h;
    s.dof_coords.push_back({x, 0.0});
    s.dof_distance.push_back(std::min(x, 1.0 - x));
  }
  return s;
}

inline ComplexSparseSystem assemble_1d(int n, double k, std::span<const double> f) {
  std::vector<Complex> fc(f.begin(), f.end());
  return assemble_1d(n, k, std::span<const Complex>(fc));
}

/// Five-point Δ_h + k² on the unknowns of a grid mask.
///
/// Impedance faces ∂u/∂ν + i k u = 0 are eliminated with a centered ghost node,
/// u_ghost = u_mirror - 2 h i k u_b. Dirichlet neighbours (u = 0) drop out of the
/// row. Unknowns are ordered row-major over the grid.
inline ComplexSparseSystem assemble_2d(const GridMask& mask, double k, std::span<const Complex> f) {
  ComplexSparseSystem s;
  s.dim = 2;
  s.h = mask.h;
  s.k = k;
  s.n_side = mask.n_side;
  s.node_to_dof.assign(mask.size(), -1);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.is_unknown(i)) {
      s.node_to_dof[i] = static_cast<std::ptrdiff_t>(s.dof_to_node.size());
      s.dof_to_node.push_back(i);
      s.dof_coords.push_back(mask.point(i));
      s.dof_distance.push_back(mask.distance[i]);
    }
  const std::size_t n = s.dof_to_node.size();
  if (f.size() != n)
    throw DimensionError("assemble_2d: f has " + std::to_string(f.size()) + " values for " + std::to_string(n) +
                         " unknowns");

  const double h = mask.h;
  const double inv_h2 = 1.0 / (h * h);
  const Complex ghost_diag(0.0, -2.0 * k / h);
  static constexpr std::array<std::array<int, 2>, 4> dirs{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

  auto node_kind = [&](int x, int y) {
    return mask.in_grid(x, y) ? mask.kind[mask.index(x, y)] : NodeKind::outside;
  };
  auto is_unknown = [](NodeKind kd) { return kd == NodeKind::inside || kd == NodeKind::impedance; };

  CsrBuilder b(n);
  for (std::size_t row = 0; row < n; ++row) {
    const std::size_t node = s.dof_to_node[row];
    const int x = mask.ix(node), y = mask.iy(node);
    const bool impedance = mask.kind[node] == NodeKind::impedance;
    bool any_neighbour = false;
    b.add(row, -4.0 * inv_h2 + k * k);
    for (auto [dx, dy] : dirs) {
      NodeKind nk = node_kind(x + dx, y + dy);
      if (is_unknown(nk)) {
        b.add(static_cast<std::size_t>(s.node_to_dof[mask.index(x + dx, y + dy)]), inv_h2);
        any_neighbour = true;
        continue;
      }
      if (nk == NodeKind::dirichlet) {
        any_neighbour = true;
        continue;
      }
      if (!impedance)
        throw AssemblyError("assemble_2d: interior node (" + std::to_string(x) + "," + std::to_string(y) +
                            ") has a neighbour outside the discrete domain");
      NodeKind mk = node_kind(x - dx, y - dy);
      if (is_unknown(mk)) {
        b.add(static_cast<std::size_t>(s.node_to_dof[mask.index(x - dx, y - dy)]), inv_h2);
        b.add(row, ghost_diag);
      } else if (mk == NodeKind::dirichlet) {
        b.add(row, ghost_diag);
      } else {
        // Both neighbours on this axis are missing: one-sided ghost on each side.
        b.add(row, inv_h2 + Complex(0.0, -k / h));
      }
    }
    if (!any_neighbour)
      throw AssemblyError("assemble_2d: isolated node (" + std::to_string(x) + "," + std::to_string(y) +
                          ") has no neighbour in the domain");
    b.finish_row();
  }
  s.A = std::move(b).build();
  s.rhs = Eigen::Map<const CVector>(f.data(), static_cast<Eigen::Index>(n));
  return s;
}

inline ComplexSparseSystem assemble_2d(const GridMask& mask, double k, const std::function<Complex(Point)>& f) {
  std::vector<Complex> vals;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.is_unknown(i)) vals.push_back(f(mask.point(i)));
  return assemble_2d(mask, k, std::span<const Complex>(vals));
}

struct SineMode {
  double eigenvalue = 0.0;
  Eigen::VectorXd vector;  ///< unit 2-norm
};

/// Eigenpairs of the 1D Dirichlet operator: λ_j = k² - (4/h²) sin²(jπh/2) with
/// v_j(x_i) = sin(jπ x_i), normalized to unit length.
inline std::vector<SineMode> analytic_modes_1d(int n, double k) {
  const double h = 1.0 / (n + 1);
  const double scale = std::sqrt(2.0 / (n + 1));
  std::vector<SineMode> modes;
  modes.reserve(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) {
    double s = std::sin(j * std::numbers::pi * h / 2);
    SineMode m;
    m.eigenvalue = k * k - 4.0 / (h * h) * s * s;
    m.vector.resize(n);
    for (int i = 1; i <= n; ++i) m.vector(i - 1) = scale * std::sin(j * std::numbers::pi * i * h);
    modes.push_back(std::move(m));
  }
  return modes;
}

// --- HSYS binary format ----------------------------------------------------
// "HSYS" u32 version, u32 dim, u64 n, f64 h, f64 k, u64 nnz,
// u64 row_ptr[n+1], u64 col_idx[nnz], c128 values[nnz], c128 rhs[n], u64 hash.

inline constexpr std::uint32_t kHsysVersion = 1;

inline std::vector<std::uint8_t> encode_system(const ComplexSparseSystem& s) {
  io::Writer w;
  w.raw("HSYS");
  w.u32(kHsysVersion);
  w.u32(static_cast<std::uint32_t>(s.dim));
  w.u64(s.A.rows);
  w.f64(s.h);
  w.f64(s.k);
  w.u64(s.A.nnz());
  for (auto v : s.A.row_ptr) w.u64(v);
  for (auto v : s.A.col_idx) w.u64(v);
  for (auto v : s.A.values) w.c128(v);
  for (Eigen::Index i = 0; i < s.rhs.size(); ++i) w.c128(s.rhs(i));
  w.seal();
  return w.buffer();
}

inline void save_system(const ComplexSparseSystem& s, const std::string& path) {
  io::Writer w;
  w.bytes(encode_system(s));
  w.save(path);
}

/// Loads the matrix, rhs and metadata. Grid bookkeeping is not part of the format.
inline ComplexSparseSystem decode_system(std::vector<std::uint8_t> bytes) {
  io::Reader r(std::move(bytes));
  r.verify_seal();
  if (r.raw(4) != "HSYS") throw FormatError("not an HSYS file");
  auto version = r.u32();
  if (version != kHsysVersion) throw VersionMismatchError("HSYS version " + std::to_string(version) + " unsupported");
  ComplexSparseSystem s;
  s.dim = static_cast<int>(r.u32());
  std::size_t n = r.u64();
  s.h = r.f64();
  s.k = r.f64();
  std::size_t nnz = r.u64();
  s.A.rows = s.A.cols = n;
  s.A.row_ptr.resize(n + 1);
  for (auto& v : s.A.row_ptr) v = r.u64();
  s.A.col_idx.resize(nnz);
  for (auto& v : s.A.col_idx) v = r.u64();
  s.A.values.resize(nnz);
  for (auto& v : s.A.values) v = r.c128();
  s.rhs.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < s.rhs.size(); ++i) s.rhs(i) = r.c128();
  return s;
}

inline ComplexSparseSystem load_system(const std::string& path) {
  return decode_system(io::read_file(path));
}

}  // namespace hints
