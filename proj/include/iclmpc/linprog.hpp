#pragma once

// Dense two-phase primal simplex for the small LPs behind the set
// computations: support functions, emptiness certificates, redundancy
// tests. Problems here have at most a few hundred rows, so a tableau
// with Bland's rule is simple, exact at vertices, and deterministic.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "iclmpc/errors.hpp"

namespace iclmpc {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
};

namespace detail {

// One simplex run on the tableau (min d'z, rows already B^-1-form with
// the given basis). Recomputes reduced costs each iteration; Bland's
// rule for both entering and leaving variable.
inline bool simplex_iterate(Eigen::MatrixXd& M, Eigen::VectorXd& rhs,
                            const Eigen::VectorXd& d, std::vector<int>& basis,
                            int active_cols) {
  constexpr double kPivTol = 1e-9;
  constexpr double kOptTol = 1e-9;
  const int m = static_cast<int>(M.rows());
  const long iter_cap = 200L * (m + active_cols) + 2000L;

  for (long iter = 0; iter < iter_cap; ++iter) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) y[i] = d[basis[i]];

    int entering = -1;
    for (int j = 0; j < active_cols; ++j) {
      const double reduced = d[j] - y.dot(M.col(j));
      if (reduced < -kOptTol) {
        entering = j;
        break;  // Bland: first improving column
      }
    }
    if (entering < 0) return true;  // optimal

    int leaving = -1;
    double best_ratio = 0.0;
    for (int i = 0; i < m; ++i) {
      const double a = M(i, entering);
      if (a > kPivTol) {
        const double ratio = rhs[i] / a;
        if (leaving < 0 || ratio < best_ratio - kPivTol ||
            (ratio < best_ratio + kPivTol && basis[i] < basis[leaving])) {
          leaving = i;
          best_ratio = ratio;
        }
      }
    }
    if (leaving < 0) return false;  // unbounded

    const double piv = M(leaving, entering);
    M.row(leaving) /= piv;
    rhs[leaving] /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == leaving) continue;
      const double f = M(i, entering);
      if (f != 0.0) {
        M.row(i) -= f * M.row(leaving);
        rhs[i] -= f * rhs[leaving];
        if (rhs[i] < 0.0 && rhs[i] > -1e-11) rhs[i] = 0.0;
      }
    }
    basis[leaving] = entering;
  }
  throw ConvergenceError("simplex hit iteration cap");
}

}  // namespace detail

/// Solves  max c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq  with x free.
/// Either constraint block may be empty (0 rows).
inline LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_ub,
                         const Eigen::VectorXd& b_ub,
                         const Eigen::MatrixXd& A_eq = Eigen::MatrixXd(),
                         const Eigen::VectorXd& b_eq = Eigen::VectorXd()) {
  const int n = static_cast<int>(c.size());
  const int m1 = static_cast<int>(A_ub.rows());
  const int m2 = static_cast<int>(A_eq.rows());
  const int m = m1 + m2;
  if ((m1 > 0 && A_ub.cols() != n) || (m2 > 0 && A_eq.cols() != n))
    throw DimensionError("solve_lp: constraint column count != variable count");
  if (b_ub.size() != m1 || b_eq.size() != m2)
    throw DimensionError("solve_lp: rhs length mismatch");

  LpResult res;
  if (m == 0) {
    res.x = Eigen::VectorXd::Zero(n);
    if (c.lpNorm<Eigen::Infinity>() > 0.0) {
      res.status = LpStatus::unbounded;
    } else {
      res.status = LpStatus::optimal;
    }
    return res;
  }

  // Columns: x+ (n) | x- (n) | slacks (m1) | artificials (m).
  const int n_struct = 2 * n + m1;
  const int ncol = n_struct + m;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, ncol);
  Eigen::VectorXd rhs(m);
  for (int i = 0; i < m1; ++i) {
    M.block(i, 0, 1, n) = A_ub.row(i);
    M.block(i, n, 1, n) = -A_ub.row(i);
    M(i, 2 * n + i) = 1.0;
    rhs[i] = b_ub[i];
  }
  for (int i = 0; i < m2; ++i) {
    M.block(m1 + i, 0, 1, n) = A_eq.row(i);
    M.block(m1 + i, n, 1, n) = -A_eq.row(i);
    rhs[m1 + i] = b_eq[i];
  }
  for (int i = 0; i < m; ++i) {
    if (rhs[i] < 0.0) {
      M.row(i) = -M.row(i);
      rhs[i] = -rhs[i];
    }
    M(i, n_struct + i) = 1.0;
  }
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n_struct + i;

  // Phase 1: minimize the artificial sum.
  Eigen::VectorXd d1 = Eigen::VectorXd::Zero(ncol);
  d1.tail(m).setOnes();
  detail::simplex_iterate(M, rhs, d1, basis, ncol);
  double phase1 = 0.0;
  for (int i = 0; i < m; ++i)
    if (basis[i] >= n_struct) phase1 += rhs[i];
  constexpr double kFeasTol = 1e-8;
  if (phase1 > kFeasTol) {
    res.status = LpStatus::infeasible;
    return res;
  }

  // Drive remaining (zero-valued) artificials out of the basis; rows
  // where that fails are redundant and get dropped.
  std::vector<int> keep;
  keep.reserve(m);
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n_struct) {
      keep.push_back(i);
      continue;
    }
    int piv_col = -1;
    for (int j = 0; j < n_struct; ++j) {
      if (std::abs(M(i, j)) > 1e-9) {
        piv_col = j;
        break;
      }
    }
    if (piv_col < 0) continue;  // redundant row
    const double piv = M(i, piv_col);
    M.row(i) /= piv;
    rhs[i] /= piv;
    for (int r = 0; r < m; ++r) {
      if (r == i) continue;
      const double f = M(r, piv_col);
      if (f != 0.0) {
        M.row(r) -= f * M.row(i);
        rhs[r] -= f * rhs[i];
      }
    }
    basis[i] = piv_col;
    keep.push_back(i);
  }
  if (static_cast<int>(keep.size()) < m) {
    Eigen::MatrixXd M2(static_cast<int>(keep.size()), ncol);
    Eigen::VectorXd rhs2(static_cast<int>(keep.size()));
    std::vector<int> basis2;
    basis2.reserve(keep.size());
    for (size_t k = 0; k < keep.size(); ++k) {
      M2.row(static_cast<int>(k)) = M.row(keep[k]);
      rhs2[static_cast<int>(k)] = rhs[keep[k]];
      basis2.push_back(basis[keep[k]]);
    }
    M.swap(M2);
    rhs.swap(rhs2);
    basis.swap(basis2);
  }

  // Phase 2: maximize c'x == minimize (-c)'(x+ - x-). Artificial
  // columns are frozen out by restricting the active column range.
  Eigen::VectorXd d2 = Eigen::VectorXd::Zero(ncol);
  d2.head(n) = -c;
  d2.segment(n, n) = c;
  const bool bounded = detail::simplex_iterate(M, rhs, d2, basis, n_struct);
  if (!bounded) {
    res.status = LpStatus::unbounded;
    return res;
  }

  Eigen::VectorXd z = Eigen::VectorXd::Zero(ncol);
  for (size_t i = 0; i < basis.size(); ++i) z[basis[i]] = rhs[static_cast<int>(i)];
  res.x = z.head(n) - z.segment(n, n);
  res.objective = c.dot(res.x);
  res.status = LpStatus::optimal;
  return res;
}

/// Phase-1 feasibility: a point satisfying A_ub x <= b_ub, A_eq x = b_eq,
/// or no value if the system is infeasible.
inline std::optional<Eigen::VectorXd> lp_feasible_point(
    const Eigen::MatrixXd& A_ub, const Eigen::VectorXd& b_ub,
    const Eigen::MatrixXd& A_eq = Eigen::MatrixXd(),
    const Eigen::VectorXd& b_eq = Eigen::VectorXd()) {
  const int n = static_cast<int>(A_ub.cols() > 0 ? A_ub.cols() : A_eq.cols());
  LpResult r = solve_lp(Eigen::VectorXd::Zero(n), A_ub, b_ub, A_eq, b_eq);
  if (r.status != LpStatus::optimal) return std::nullopt;
  return r.x;
}

}  // namespace iclmpc
