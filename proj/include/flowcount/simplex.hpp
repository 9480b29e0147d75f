#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "flowcount/dense.hpp"

namespace flowcount {

/// min c'x subject to A x = b, x >= 0.
struct StandardFormLp {
  DenseMatrix a;
  std::vector<double> b;
  std::vector<double> c;
};

enum class SimplexStatus { optimal, infeasible, unbounded, iteration_limit };

struct SimplexOptions {
  double pivot_tol = 1e-9;
  double ratio_tol = 1e-9;
  std::size_t max_iterations = 100000;
};

struct SimplexResult {
  SimplexStatus status = SimplexStatus::optimal;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
};

/// Dense two-phase tableau simplex with Bland's smallest-index rule.
class SimplexSolver {
 public:
  explicit SimplexSolver(SimplexOptions opts = {}) : opts_(opts) {}

  SimplexResult solve(const StandardFormLp& lp) {
    m_ = lp.a.rows();
    n_ = lp.a.cols();
    const std::size_t width = n_ + m_ + 1;
    tab_ = DenseMatrix(m_ + 1, width);
    basis_.assign(m_, 0);
    active_.assign(m_, true);

    for (std::size_t i = 0; i < m_; ++i) {
      const double sign = lp.b[i] < 0.0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < n_; ++j) tab_(i, j) = sign * lp.a(i, j);
      tab_(i, n_ + i) = 1.0;
      tab_(i, rhs()) = sign * lp.b[i];
      basis_[i] = n_ + i;
    }
    // Slack-like columns (a lone +1 in a row) start in the basis in place of the artificial.
    for (std::size_t j = 0; j < n_; ++j) {
      std::size_t row = m_;
      bool unit = true;
      for (std::size_t i = 0; i < m_ && unit; ++i) {
        if (tab_(i, j) == 0.0) continue;
        if (row != m_ || tab_(i, j) != 1.0) unit = false;
        row = i;
      }
      if (unit && row != m_ && basis_[row] >= n_) {
        tab_(row, basis_[row]) = 0.0;
        basis_[row] = j;
      }
    }

    SimplexResult result;
    // Phase 1: minimise the sum of artificials.
    std::vector<double> phase1(n_ + m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) phase1[n_ + i] = 1.0;
    load_objective(phase1);
    allowed_ = n_ + m_;
    auto status = iterate(result.iterations);
    if (status == SimplexStatus::iteration_limit) return finish(result, status);
    double b_scale = 1.0;
    for (double v : lp.b) b_scale += std::abs(v);
    if (-tab_(m_, rhs()) > opts_.ratio_tol * b_scale) return finish(result, SimplexStatus::infeasible);

    drive_out_artificials();

    // Phase 2 over structural columns only.
    std::vector<double> cost(n_ + m_, 0.0);
    std::copy(lp.c.begin(), lp.c.end(), cost.begin());
    load_objective(cost);
    allowed_ = n_;
    status = iterate(result.iterations);
    if (status != SimplexStatus::optimal) return finish(result, status);

    result.x.assign(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (active_[i] && basis_[i] < n_) result.x[basis_[i]] = tab_(i, rhs());
    }
    result.objective = 0.0;
    for (std::size_t j = 0; j < n_; ++j) result.objective += lp.c[j] * result.x[j];
    return finish(result, SimplexStatus::optimal);
  }

 private:
  std::size_t rhs() const { return n_ + m_; }

  static SimplexResult& finish(SimplexResult& r, SimplexStatus s) {
    r.status = s;
    return r;
  }

  // Objective row holds reduced costs d_j = c_j - c_B' B^-1 A_j and -z in the rhs column.
  void load_objective(const std::vector<double>& cost) {
    for (std::size_t j = 0; j <= rhs(); ++j) tab_(m_, j) = j < cost.size() ? cost[j] : 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (!active_[i]) continue;
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j <= rhs(); ++j) tab_(m_, j) -= cb * tab_(i, j);
    }
  }

  SimplexStatus iterate(std::size_t& iterations) {
    while (true) {
      std::size_t enter = allowed_;
      for (std::size_t j = 0; j < allowed_; ++j) {
        if (tab_(m_, j) < -opts_.pivot_tol) {
          enter = j;
          break;
        }
      }
      if (enter == allowed_) return SimplexStatus::optimal;

      std::size_t leave = m_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        if (!active_[i] || tab_(i, enter) <= opts_.pivot_tol) continue;
        const double ratio = tab_(i, rhs()) / tab_(i, enter);
        if (leave == m_ || ratio < best - opts_.ratio_tol) {
          best = ratio;
          leave = i;
        } else if (ratio <= best + opts_.ratio_tol && basis_[i] < basis_[leave]) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave == m_) return SimplexStatus::unbounded;
      if (++iterations > opts_.max_iterations) return SimplexStatus::iteration_limit;
      pivot(leave, enter);
    }
  }

  void pivot(std::size_t r, std::size_t c) {
    const double p = tab_(r, c);
    for (std::size_t j = 0; j <= rhs(); ++j) tab_(r, j) /= p;
    tab_(r, c) = 1.0;
    for (std::size_t i = 0; i <= m_; ++i) {
      if (i == r || (i < m_ && !active_[i])) continue;
      const double f = tab_(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= rhs(); ++j) tab_(i, j) -= f * tab_(r, j);
      tab_(i, c) = 0.0;
    }
    basis_[r] = c;
  }

  // Pivots zero-level artificials out of the basis; rows with no structural pivot are redundant.
  void drive_out_artificials() {
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < n_) continue;
      std::size_t col = n_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (std::abs(tab_(i, j)) > opts_.pivot_tol) {
          col = j;
          break;
        }
      }
      if (col == n_) {
        active_[i] = false;
      } else {
        pivot(i, col);
      }
    }
  }

  SimplexOptions opts_;
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::size_t allowed_ = 0;
  DenseMatrix tab_;
  std::vector<std::size_t> basis_;
  std::vector<bool> active_;
};

inline SimplexResult solve_simplex(const StandardFormLp& lp, SimplexOptions opts = {}) {
  return SimplexSolver(opts).solve(lp);
}

}  // namespace flowcount
