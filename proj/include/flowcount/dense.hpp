#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace flowcount {

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) s += (*this)(r, c) * x[c];
      y[r] = s;
    }
    return y;
  }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct EliminationResult {
  std::vector<double> solution;
  std::size_t rank = 0;
  /// False when a zero row of the echelon form kept a nonzero right-hand side.
  bool consistent = true;
  /// Largest right-hand side left on a zero row.
  double inconsistency = 0.0;
};

/// Solves A x = b (any shape) by Gaussian elimination with partial pivoting.
///
/// A column whose best remaining pivot is below pivot_tol * max|A| is treated as free and
/// its unknown is set to zero, so consistent rank-deficient systems yield a basic solution.
inline EliminationResult gaussian_eliminate(DenseMatrix a, std::vector<double> b, double pivot_tol = 1e-12,
                                            double consistency_tol = 1e-9) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const double tol = pivot_tol * std::max(1.0, a.max_abs());
  double b_scale = 1.0;
  for (double v : b) b_scale = std::max(b_scale, std::abs(v));

  std::vector<std::size_t> pivot_col;
  std::size_t r = 0;
  for (std::size_t c = 0; c < n && r < m; ++c) {
    std::size_t best = r;
    for (std::size_t i = r + 1; i < m; ++i) {
      if (std::abs(a(i, c)) > std::abs(a(best, c))) best = i;
    }
    if (std::abs(a(best, c)) <= tol) continue;
    if (best != r) {
      std::swap_ranges(a.row(best).begin(), a.row(best).end(), a.row(r).begin());
      std::swap(b[best], b[r]);
    }
    const double p = a(r, c);
    for (std::size_t i = r + 1; i < m; ++i) {
      const double factor = a(i, c) / p;
      if (factor == 0.0) continue;
      a(i, c) = 0.0;
      for (std::size_t j = c + 1; j < n; ++j) a(i, j) -= factor * a(r, j);
      b[i] -= factor * b[r];
    }
    pivot_col.push_back(c);
    ++r;
  }

  EliminationResult out;
  out.rank = r;
  for (std::size_t i = r; i < m; ++i) out.inconsistency = std::max(out.inconsistency, std::abs(b[i]));
  out.consistent = out.inconsistency <= consistency_tol * b_scale;

  out.solution.assign(n, 0.0);
  for (std::size_t k = r; k-- > 0;) {
    const std::size_t c = pivot_col[k];
    double s = b[k];
    for (std::size_t j = c + 1; j < n; ++j) s -= a(k, j) * out.solution[j];
    out.solution[c] = s / a(k, c);
  }
  return out;
}

}  // namespace flowcount
