#pragma once

// Operator-splitting solver for convex QPs
//
//   minimize   1/2 x'Px + q'x
//   subject to l <= Ax <= u
//
// in the ADMM form popularized by OSQP: Ruiz equilibration, a single
// quasi-definite KKT factorization reused across iterations, adaptive
// step-size with refactorization, primal/dual infeasibility certificates
// and an active-set polish step for high-accuracy solutions. Vectors
// (q, l, u) can be swapped without refactorizing, which is what makes
// receding-horizon resolves cheap.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "iclmpc/errors.hpp"

namespace iclmpc {

enum class QpStatus { optimal, infeasible, max_iter };

struct QpReport {
  QpStatus status = QpStatus::max_iter;
  double objective = 0.0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

struct QpSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_infeas = 1e-8;
  int infeas_persistence = 3;  // consecutive positive checks before declaring
  int max_iter = 50000;
  double sigma = 1e-6;
  double alpha = 1.6;
  double rho0 = 0.1;
  bool adaptive_rho = true;
  int check_interval = 25;
  bool polish = true;
  int scaling_iters = 10;
  bool verbose = false;
};

struct QpProblem {
  Eigen::SparseMatrix<double> P;  // n x n, symmetric PSD, full storage
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> A;  // m x n
  Eigen::VectorXd l, u;
};

struct QpResult {
  QpReport report;
  Eigen::VectorXd x;  // primal
  Eigen::VectorXd y;  // dual for l <= Ax <= u
  Eigen::VectorXd z;  // Ax at the solution
};

namespace detail {

inline Eigen::VectorXd col_inf_norms(const Eigen::SparseMatrix<double>& M) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(M.cols());
  for (int j = 0; j < M.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(M, j); it; ++it)
      n[j] = std::max(n[j], std::abs(it.value()));
  return n;
}

inline Eigen::VectorXd row_inf_norms(const Eigen::SparseMatrix<double>& M) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(M.rows());
  for (int j = 0; j < M.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(M, j); it; ++it)
      n[it.row()] = std::max(n[it.row()], std::abs(it.value()));
  return n;
}

inline void scale_rows_cols(Eigen::SparseMatrix<double>& M,
                            const Eigen::VectorXd& row_scale,
                            const Eigen::VectorXd& col_scale) {
  for (int j = 0; j < M.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(M, j); it; ++it)
      it.valueRef() *= row_scale[it.row()] * col_scale[j];
}

}  // namespace detail

class QpSolver {
 public:
  explicit QpSolver(QpProblem prob, QpSettings settings = {})
      : prob_(std::move(prob)), s_(settings) {
    n_ = static_cast<int>(prob_.P.rows());
    m_ = static_cast<int>(prob_.A.rows());
    if (prob_.P.cols() != n_ || prob_.A.cols() != n_ ||
        prob_.q.size() != n_ || prob_.l.size() != m_ || prob_.u.size() != m_)
      throw DimensionError("QpSolver: inconsistent problem dimensions");
    if (m_ < 1) throw InvalidArgumentError("QpSolver: needs >= 1 constraint");
    if ((prob_.u - prob_.l).minCoeff() < 0.0)
      throw InvalidArgumentError("QpSolver: some l > u");
    prob_.P.makeCompressed();
    prob_.A.makeCompressed();
    equilibrate();
    rho_bar_ = s_.rho0;
    build_rho();
    assemble_kkt(true);
    x_ = Eigen::VectorXd::Zero(n_);
    z_ = Eigen::VectorXd::Zero(m_);
    y_ = Eigen::VectorXd::Zero(m_);
  }

  /// Replaces q, l, u keeping the matrices, the scaling and the
  /// factorization. The next solve() warm-starts from the last iterates.
  void update_vectors(const Eigen::VectorXd& q, const Eigen::VectorXd& l,
                      const Eigen::VectorXd& u) {
    if (q.size() != n_ || l.size() != m_ || u.size() != m_)
      throw DimensionError("update_vectors: size mismatch");
    prob_.q = q;
    prob_.l = l;
    prob_.u = u;
    qs_ = cost_scale_ * D_.cwiseProduct(q);
    ls_ = E_.cwiseProduct(l);
    us_ = E_.cwiseProduct(u);
    // A changed equality pattern invalidates the per-row step sizes.
    Eigen::VectorXd fresh = rho_;
    const double bar = rho_bar_;
    for (int i = 0; i < m_; ++i) {
      const bool eq = std::isfinite(l[i]) && std::isfinite(u[i]) &&
                      u[i] - l[i] < 1e-12;
      fresh[i] = eq ? 1e3 * bar : bar;
    }
    if ((fresh - rho_).lpNorm<Eigen::Infinity>() > 0.0) {
      rho_ = fresh;
      assemble_kkt(false);
    }
  }

  void warm_start(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    x_ = D_.cwiseInverse().cwiseProduct(x);
    y_ = cost_scale_ * E_.cwiseInverse().cwiseProduct(y);
    z_ = As_ * x_;
  }

  /// Zeroes the iterates and restores the initial step size, so a cold
  /// solve follows the same path regardless of what ran before.
  void cold_start() {
    x_.setZero();
    z_.setZero();
    y_.setZero();
    if (rho_bar_ != s_.rho0) {
      rho_bar_ = s_.rho0;
      build_rho();
      assemble_kkt(false);
    }
  }

  QpResult solve() {
    QpResult res;
    const double inf = std::numeric_limits<double>::infinity();
    int iter = 0;
    double rp = inf, rd = inf;
    int infeas_votes = 0;
    QpStatus status = QpStatus::max_iter;

    Eigen::VectorXd rhs(n_ + m_), sol(n_ + m_);
    Eigen::VectorXd x_prev(n_), y_prev(m_);

    while (iter < s_.max_iter) {
      ++iter;
      x_prev = x_;
      y_prev = y_;

      rhs.head(n_) = s_.sigma * x_ - qs_;
      rhs.tail(m_) = z_ - y_.cwiseQuotient(rho_);
      sol = ldlt_.solve(rhs);
      const auto xt = sol.head(n_);
      Eigen::VectorXd zt = z_ + (sol.tail(m_) - y_).cwiseQuotient(rho_);

      x_ = s_.alpha * xt + (1.0 - s_.alpha) * x_;
      Eigen::VectorXd z_tmp =
          s_.alpha * zt + (1.0 - s_.alpha) * z_ + y_.cwiseQuotient(rho_);
      z_ = z_tmp.cwiseMax(ls_).cwiseMin(us_);
      y_ = rho_.cwiseProduct(z_tmp - z_);  // z_tmp already carries y/rho

      if (iter % s_.check_interval != 0 && iter != s_.max_iter) continue;

      // Unscaled iterates and residuals.
      const Eigen::VectorXd x_u = D_.cwiseProduct(x_);
      const Eigen::VectorXd y_u =
          E_.cwiseProduct(y_) / cost_scale_;
      const Eigen::VectorXd z_u = E_.cwiseInverse().cwiseProduct(z_);
      const Eigen::VectorXd Ax = prob_.A * x_u;
      const Eigen::VectorXd Px = prob_.P * x_u;
      const Eigen::VectorXd Aty = prob_.A.transpose() * y_u;
      rp = (Ax - z_u).lpNorm<Eigen::Infinity>();
      rd = (Px + prob_.q + Aty).lpNorm<Eigen::Infinity>();
      const double prim_norm =
          std::max(Ax.lpNorm<Eigen::Infinity>(), z_u.lpNorm<Eigen::Infinity>());
      const double dual_norm = std::max(
          {Px.lpNorm<Eigen::Infinity>(), Aty.lpNorm<Eigen::Infinity>(),
           prob_.q.lpNorm<Eigen::Infinity>()});
      const double eps_p = s_.eps_abs + s_.eps_rel * prim_norm;
      const double eps_d = s_.eps_abs + s_.eps_rel * dual_norm;
      if (s_.verbose && iter % (s_.check_interval * 80) == 0) {
        int worst = 0;
        (Ax - z_u).cwiseAbs().maxCoeff(&worst);
        std::printf("qp iter %6d rp %9.2e rd %9.2e rho %8.1e worst_row %d\n",
                    iter, rp, rd, rho_bar_, worst);
      }
      if (rp <= eps_p && rd <= eps_d) {
        status = QpStatus::optimal;
        break;
      }

      // A certificate must persist across checks: transients right
      // after cold starts or step-size swaps can masquerade as one on
      // marginally feasible problems.
      if (detect_primal_infeasible(y_ - y_prev)) {
        if (++infeas_votes >= s_.infeas_persistence) {
          status = QpStatus::infeasible;
          break;
        }
      } else {
        infeas_votes = 0;
      }

      if (s_.adaptive_rho && rp > 0.0 && rd > 0.0 &&
          iter % (s_.check_interval * 4) == 0) {
        const double num = rp / std::max(prim_norm, 1e-12);
        const double den = rd / std::max(dual_norm, 1e-12);
        const double ratio = std::sqrt(num / std::max(den, 1e-16));
        if (ratio > 5.0 || ratio < 0.2) {
          rho_bar_ = std::clamp(rho_bar_ * ratio, 1e-6, 1e6);
          build_rho();
          assemble_kkt(false);
        }
      }
    }

    res.x = D_.cwiseProduct(x_);
    res.y = E_.cwiseProduct(y_) / cost_scale_;
    res.z = E_.cwiseInverse().cwiseProduct(z_);
    res.report.status = status;
    res.report.iterations = iter;
    res.report.primal_residual = rp;
    res.report.dual_residual = rd;

    if (status == QpStatus::optimal && s_.polish) polish(res);
    if (status != QpStatus::infeasible) {
      const Eigen::VectorXd Px =
          prob_.P * res.x;
      res.report.objective = 0.5 * res.x.dot(Px) + prob_.q.dot(res.x);
    }
    return res;
  }

 private:
  void equilibrate() {
    D_ = Eigen::VectorXd::Ones(n_);
    E_ = Eigen::VectorXd::Ones(m_);
    cost_scale_ = 1.0;
    Ps_ = prob_.P;
    As_ = prob_.A;
    qs_ = prob_.q;
    for (int it = 0; it < s_.scaling_iters; ++it) {
      Eigen::VectorXd cp = detail::col_inf_norms(Ps_);
      Eigen::VectorXd ca = detail::col_inf_norms(As_);
      Eigen::VectorXd d(n_);
      for (int j = 0; j < n_; ++j) {
        const double nj = std::max(cp[j], ca[j]);
        d[j] = nj > 1e-12 ? 1.0 / std::sqrt(nj) : 1.0;
        d[j] = std::clamp(d[j], 1e-4, 1e4);
      }
      Eigen::VectorXd ra = detail::row_inf_norms(As_);
      Eigen::VectorXd e(m_);
      for (int i = 0; i < m_; ++i) {
        e[i] = ra[i] > 1e-12 ? 1.0 / std::sqrt(ra[i]) : 1.0;
        e[i] = std::clamp(e[i], 1e-4, 1e4);
      }
      detail::scale_rows_cols(Ps_, d, d);
      detail::scale_rows_cols(As_, e, d);
      qs_ = d.cwiseProduct(qs_);
      D_ = D_.cwiseProduct(d);
      E_ = E_.cwiseProduct(e);

      // Cost normalization, as in modified Ruiz.
      const double p_mean = detail::col_inf_norms(Ps_).mean();
      const double q_norm = qs_.lpNorm<Eigen::Infinity>();
      const double denom = std::max(p_mean, q_norm);
      if (denom > 1e-12) {
        const double g = std::clamp(1.0 / denom, 1e-6, 1e6);
        Ps_ *= g;
        qs_ *= g;
        cost_scale_ *= g;
      }
    }
    ls_ = E_.cwiseProduct(prob_.l);
    us_ = E_.cwiseProduct(prob_.u);
  }

  void build_rho() {
    rho_ = Eigen::VectorXd::Constant(m_, rho_bar_);
    for (int i = 0; i < m_; ++i) {
      if (std::isfinite(prob_.l[i]) && std::isfinite(prob_.u[i]) &&
          prob_.u[i] - prob_.l[i] < 1e-12)
        rho_[i] = 1e3 * rho_bar_;
    }
  }

  void assemble_kkt(bool analyze) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(Ps_.nonZeros() + 2 * As_.nonZeros() + n_ + m_);
    for (int j = 0; j < Ps_.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ps_, j); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()), j, it.value());
    for (int j = 0; j < n_; ++j) trips.emplace_back(j, j, s_.sigma);
    for (int j = 0; j < As_.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(As_, j); it; ++it) {
        trips.emplace_back(n_ + static_cast<int>(it.row()), j, it.value());
        trips.emplace_back(j, n_ + static_cast<int>(it.row()), it.value());
      }
    for (int i = 0; i < m_; ++i)
      trips.emplace_back(n_ + i, n_ + i, -1.0 / rho_[i]);
    Eigen::SparseMatrix<double> K(n_ + m_, n_ + m_);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    if (analyze) ldlt_.analyzePattern(K);
    ldlt_.factorize(K);
    if (ldlt_.info() != Eigen::Success)
      throw ConvergenceError("QpSolver: KKT factorization failed");
  }

  bool detect_primal_infeasible(const Eigen::VectorXd& dy_scaled) const {
    const Eigen::VectorXd dy =
        E_.cwiseProduct(dy_scaled) / cost_scale_;
    const double dy_norm = dy.lpNorm<Eigen::Infinity>();
    if (dy_norm < 1e-14) return false;
    const double lhs1 =
        (prob_.A.transpose() * dy).lpNorm<Eigen::Infinity>();
    if (lhs1 > s_.eps_infeas * dy_norm) return false;
    double sup = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (dy[i] > 0.0) {
        if (!std::isfinite(prob_.u[i])) return false;
        sup += prob_.u[i] * dy[i];
      } else if (dy[i] < 0.0) {
        if (!std::isfinite(prob_.l[i])) return false;
        sup += prob_.l[i] * dy[i];
      }
    }
    return sup <= -s_.eps_infeas * dy_norm;
  }

  // Active-set refinement of a converged ADMM iterate. Solves the
  // equality-constrained KKT system on the detected active rows with a
  // small regularization plus iterative refinement; kept only when it
  // actually reduces the residuals.
  void polish(QpResult& res) const {
    const double act_tol = 1e-9 * std::max(1.0, res.y.lpNorm<Eigen::Infinity>());
    std::vector<int> active;
    Eigen::VectorXd b_act_list(m_);
    for (int i = 0; i < m_; ++i) {
      if (res.y[i] < -act_tol && std::isfinite(prob_.l[i])) {
        b_act_list[static_cast<int>(active.size())] = prob_.l[i];
        active.push_back(i);
      } else if (res.y[i] > act_tol && std::isfinite(prob_.u[i])) {
        b_act_list[static_cast<int>(active.size())] = prob_.u[i];
        active.push_back(i);
      }
    }
    const int na = static_cast<int>(active.size());
    const int dim = n_ + na;
    const double delta = 1e-9;
    const Eigen::VectorXd b_act = b_act_list.head(na);
    const auto& Ar = AsRowMajor();

    std::vector<Eigen::Triplet<double>> trips;
    for (int j = 0; j < prob_.P.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(prob_.P, j); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()), j, it.value());
    for (int j = 0; j < n_; ++j) trips.emplace_back(j, j, delta);
    for (int k = 0; k < na; ++k) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
               Ar, active[k]);
           it; ++it) {
        trips.emplace_back(n_ + k, static_cast<int>(it.col()), it.value());
        trips.emplace_back(static_cast<int>(it.col()), n_ + k, it.value());
      }
      trips.emplace_back(n_ + k, n_ + k, -delta);
    }

    Eigen::SparseMatrix<double> K(dim, dim);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> fac;
    fac.compute(K);
    if (fac.info() != Eigen::Success) return;

    auto active_products = [&](const Eigen::VectorXd& x,
                               const Eigen::VectorXd& ya,
                               Eigen::VectorXd& ax, Eigen::VectorXd& atya) {
      ax.setZero(na);
      atya.setZero(n_);
      for (int k = 0; k < na; ++k) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                 Ar, active[k]);
             it; ++it) {
          ax[k] += it.value() * x[it.col()];
          atya[it.col()] += it.value() * ya[k];
        }
      }
    };

    Eigen::VectorXd rhs(dim);
    rhs.head(n_) = -prob_.q;
    rhs.tail(na) = b_act;
    Eigen::VectorXd sol = fac.solve(rhs);
    // Refinement against the unregularized system.
    Eigen::VectorXd ax(na), atya(n_), r(dim);
    for (int ref = 0; ref < 4; ++ref) {
      const Eigen::VectorXd x = sol.head(n_);
      const Eigen::VectorXd ya = sol.tail(na);
      active_products(x, ya, ax, atya);
      r.head(n_) = -prob_.q - (prob_.P * x) - atya;
      r.tail(na) = b_act - ax;
      sol += fac.solve(r);
    }

    Eigen::VectorXd x_pol = sol.head(n_);
    Eigen::VectorXd y_pol = Eigen::VectorXd::Zero(m_);
    for (int k = 0; k < na; ++k) y_pol[active[k]] = sol[n_ + k];

    const Eigen::VectorXd Ax = prob_.A * x_pol;
    const Eigen::VectorXd z_pol = Ax.cwiseMax(prob_.l).cwiseMin(prob_.u);
    const double rp = (Ax - z_pol).lpNorm<Eigen::Infinity>();
    const double rd =
        (prob_.P * x_pol + prob_.q + prob_.A.transpose() * y_pol)
            .lpNorm<Eigen::Infinity>();
    if (std::max(rp, rd) <
        std::max(res.report.primal_residual, res.report.dual_residual)) {
      res.x = x_pol;
      res.y = y_pol;
      res.z = z_pol;
      res.report.primal_residual = rp;
      res.report.dual_residual = rd;
    }
  }

  const Eigen::SparseMatrix<double, Eigen::RowMajor>& AsRowMajor() const {
    if (a_row_major_.rows() == 0 && m_ > 0) a_row_major_ = prob_.A;
    return a_row_major_;
  }

  QpProblem prob_;
  QpSettings s_;
  int n_ = 0, m_ = 0;

  // Scaled data.
  Eigen::SparseMatrix<double> Ps_, As_;
  Eigen::VectorXd qs_, ls_, us_;
  Eigen::VectorXd D_, E_;
  double cost_scale_ = 1.0;

  double rho_bar_ = 0.1;
  Eigen::VectorXd rho_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;

  Eigen::VectorXd x_, z_, y_;
  mutable Eigen::SparseMatrix<double, Eigen::RowMajor> a_row_major_;
};

/// One-shot convenience wrapper.
inline QpResult solve_qp(QpProblem prob, QpSettings settings = {}) {
  QpSolver solver(std::move(prob), settings);
  return solver.solve();
}

}  // namespace iclmpc
