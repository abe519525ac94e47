#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hints/error.hpp"

namespace hints {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// Compressed sparse row matrix with complex entries. Column indices are
/// strictly increasing within each row.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<Complex> values;

  std::size_t nnz() const { return values.size(); }

  Complex at(std::size_t r, std::size_t c) const {
    auto b = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
    auto e = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
    auto it = std::lower_bound(b, e, c);
    if (it == e || *it != c) return {};
    return values[static_cast<std::size_t>(it - col_idx.begin())];
  }

  static CsrMatrix identity(std::size_t n) {
    CsrMatrix m;
    m.rows = m.cols = n;
    m.row_ptr.resize(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      m.row_ptr[i + 1] = i + 1;
      m.col_idx.push_back(i);
      m.values.emplace_back(1.0);
    }
    return m;
  }

  static CsrMatrix from_dense(const CMatrix& d) {
    CsrMatrix m;
    m.rows = static_cast<std::size_t>(d.rows());
    m.cols = static_cast<std::size_t>(d.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.cols(); ++c)
        if (d(r, c) != Complex{}) {
          m.col_idx.push_back(static_cast<std::size_t>(c));
          m.values.push_back(d(r, c));
        }
      m.row_ptr.push_back(m.values.size());
    }
    return m;
  }

  CMatrix to_dense() const {
    CMatrix d = CMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_idx[k])) = values[k];
    return d;
  }
};

/// Row-by-row CSR assembly. Entries added to the same (row, col) are summed in
/// insertion order, so the stored values are deterministic.
class CsrBuilder {
 public:
  explicit CsrBuilder(std::size_t cols) { m_.cols = cols; }

  void add(std::size_t col, Complex v) {
    if (col >= m_.cols) throw DimensionError("CsrBuilder: column out of range");
    for (auto& e : row_)
      if (e.first == col) {
        e.second += v;
        return;
      }
    row_.emplace_back(col, v);
  }

  void finish_row() {
    std::stable_sort(row_.begin(), row_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [c, v] : row_) {
      m_.col_idx.push_back(c);
      m_.values.push_back(v);
    }
    m_.row_ptr.push_back(m_.values.size());
    ++m_.rows;
    row_.clear();
  }

  CsrMatrix build() && { return std::move(m_); }

 private:
  CsrMatrix m_;
  std::vector<std::pair<std::size_t, Complex>> row_;
};

}  // namespace hints
