#pragma once

// Robust MPC subproblem: affine disturbance feedback over a box-supported
// disturbance, exact per-row support-function robustification, the
// multi-step robust terminal set and the Riccati terminal cost.
//
// The QP structure depends only on (model, constraint estimate, terminal
// set), so one MpcStepSolver instance is built per estimate and re-solved
// along the rollout with updated vectors and warm starts.

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "iclmpc/geometry.hpp"
#include "iclmpc/qp.hpp"
#include "iclmpc/system.hpp"

namespace iclmpc {

/// Discrete-time algebraic Riccati fixed point by value iteration.
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q,
                                  const Eigen::MatrixXd& R) {
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < 1000000; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd S = R + BtP * B;
    const Eigen::MatrixXd Pn =
        Q + A.transpose() * P * A -
        A.transpose() * P * B * S.ldlt().solve(BtP * A);
    const double diff = (Pn - P).lpNorm<Eigen::Infinity>();
    P = Pn;
    if (diff <= 1e-13 * std::max(1.0, P.lpNorm<Eigen::Infinity>())) return P;
  }
  throw ConvergenceError("solve_dare: value iteration did not converge");
}

/// Infinite-horizon LQR gain, u = Kx convention (A + BK stable).
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A,
                                const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& Q,
                                const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd P = solve_dare(A, B, Q, R);
  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  return -S.ldlt().solve(B.transpose() * P * A);
}

/// Terminal cost for the MPC objective: the DARE solution for the task's
/// stage weights.
inline Eigen::MatrixXd terminal_cost(const ControlModel& model) {
  return solve_dare(model.A, model.B, model.Q_stage, model.R_stage);
}

/// Worst case of sum_s a_s' w_s over independent w_s in W: the sum of
/// per-stage support values. This is the exact tightening used for every
/// robustified constraint row.
inline double stacked_support(const Polytope& W,
                              const std::vector<Eigen::VectorXd>& stage_blocks) {
  double s = 0.0;
  for (const auto& a : stage_blocks) s += support(W, a);
  return s;
}

/// Robust terminal set: states from which the terminal feedback u = Kx
/// keeps the given state rows and the input rows satisfied for `steps`
/// further steps, for every admissible disturbance sequence. Row family i
/// constrains A_cl^i x with the accumulated worst case of the disturbance
/// convolution subtracted from the offsets. The result may be empty;
/// callers decide how to react.
inline Polytope terminal_set(const ControlModel& model,
                             const Polytope& state_set, int steps) {
  if (steps < 0) throw InvalidArgumentError("terminal_set: steps < 0");
  if (state_set.dim() != model.state_dim())
    throw DimensionError("terminal_set: state set dimension mismatch");
  const int n = model.state_dim();
  const Eigen::MatrixXd Acl = model.A + model.B * model.K;

  const int ns = state_set.num_rows();
  const int nu = model.U.num_rows();
  const Eigen::MatrixXd HuK = model.U.H() * model.K;  // input rows pulled to x
  Eigen::MatrixXd H((steps + 1) * (ns + nu), n);
  Eigen::VectorXd h((steps + 1) * (ns + nu));

  Eigen::MatrixXd Acl_pow_i = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd tight_s = Eigen::VectorXd::Zero(ns);
  Eigen::VectorXd tight_u = Eigen::VectorXd::Zero(nu);
  int row = 0;
  for (int i = 0; i <= steps; ++i) {
    if (i > 0) {
      // New convolution term: disturbance entering i-1 steps before the
      // constraint is read, propagated through A_cl^{i-1}.
      const Eigen::MatrixXd prop = Acl_pow_i;  // A_cl^{i-1} at this point
      for (int r = 0; r < ns; ++r)
        tight_s[r] +=
            support(model.W, prop.transpose() * state_set.H().row(r).transpose());
      for (int r = 0; r < nu; ++r)
        tight_u[r] += support(model.W, prop.transpose() * HuK.row(r).transpose());
      Acl_pow_i = Acl * Acl_pow_i;  // now A_cl^i
    }
    for (int r = 0; r < ns; ++r) {
      H.row(row) = state_set.H().row(r) * Acl_pow_i;
      h[row] = state_set.h()[r] - tight_s[r];
      ++row;
    }
    for (int r = 0; r < nu; ++r) {
      H.row(row) = HuK.row(r) * Acl_pow_i;
      h[row] = model.U.h()[r] - tight_u[r];
      ++row;
    }
  }

  // Rows that became zero (e.g. nilpotent A_cl directions) carry no
  // constraint content and cannot stay in an H-rep.
  std::vector<int> keep;
  for (int r = 0; r < row; ++r)
    if (H.row(r).lpNorm<Eigen::Infinity>() > 1e-14) keep.push_back(r);
  Eigen::MatrixXd Hk(static_cast<int>(keep.size()), n);
  Eigen::VectorXd hk(static_cast<int>(keep.size()));
  for (size_t r = 0; r < keep.size(); ++r) {
    Hk.row(static_cast<int>(r)) = H.row(keep[r]);
    hk[static_cast<int>(r)] = h[keep[r]];
  }
  return Polytope(std::move(Hk), std::move(hk));
}

/// Block-lower-triangular disturbance feedback policy plus the nominal
/// trajectory it decorates.
struct MpcDecision {
  // M[k][q]: the m x n gain mapping disturbance stage q < k into the
  // input at prediction step k (strict causality).
  std::vector<std::vector<Eigen::MatrixXd>> M;
  std::vector<Eigen::VectorXd> v;               // nominal inputs, N entries
  std::vector<Eigen::VectorXd> nominal_states;  // N+1 entries
};

struct StepSolution {
  QpStatus status = QpStatus::infeasible;
  Eigen::VectorXd u;
  MpcDecision decision;
  QpReport report;
};

struct MpcOptions {
  double m_regularization = 1e-8;
  QpSettings qp;
};

/// One-step robust MPC solver with cached problem structure.
class MpcStepSolver {
 public:
  MpcStepSolver(ControlModel model, Polytope state_set, Polytope terminal,
                Eigen::MatrixXd P_terminal, MpcOptions options = {})
      : model_(std::move(model)),
        state_set_(std::move(state_set)),
        terminal_(remove_redundant_rows(terminal)),
        P_terminal_(std::move(P_terminal)),
        opts_(options) {
    if (state_set_.dim() != model_.state_dim() ||
        terminal_.dim() != model_.state_dim())
      throw DimensionError("MpcStepSolver: set dimension mismatch");
    auto bb = box_bounds(model_.W);
    if (!bb)
      throw UnsupportedDistributionError(
          "MpcStepSolver: disturbance support must be an axis-aligned box");
    w_center_ = 0.5 * (bb->first + bb->second);
    w_radius_ = 0.5 * (bb->second - bb->first);
    build();
  }

  /// Solves the step QP at the measured state. Warm-started from the
  /// previous call; use reset_warm_start() at the start of each rollout.
  StepSolution solve(const Eigen::VectorXd& x_t) {
    if (x_t.size() != model_.state_dim())
      throw DimensionError("MpcStepSolver::solve: state dimension mismatch");
    StepSolution out;

    // Current-state rows of the constraint estimate (prediction step 0).
    if (!contains(state_set_, x_t, default_membership_tol(state_set_))) {
      out.status = QpStatus::infeasible;
      out.report.status = QpStatus::infeasible;
      return out;
    }

    Eigen::VectorXd q = Eigen::VectorXd::Zero(n_var_);
    const int m = model_.input_dim();
    for (int l = 0; l < model_.N; ++l)
      q.segment(l * m, m) = 2.0 * (q_lin_map_[l] * x_t + q_lin_const_[l]);
    Eigen::VectorXd u_vec = rhs_static_ - rhs_xcoef_ * x_t;
    qp_->update_vectors(q, l_vec_, u_vec);
    QpResult res = qp_->solve();

    out.status = res.report.status;
    out.report = res.report;
    if (out.status != QpStatus::optimal) return out;

    out.report.objective += objective_constant(x_t);
    out.decision = extract_decision(res.x, x_t);
    out.u = out.decision.v.front();
    return out;
  }

  void reset_warm_start() { qp_->cold_start(); }

  const Polytope& terminal() const { return terminal_; }
  const Polytope& state_set() const { return state_set_; }

  /// The assembled QP for a given measured state (matrices are the cached
  /// ones). Used by the debug dump and by cross-validation tests.
  QpProblem problem_at(const Eigen::VectorXd& x_t) const {
    QpProblem p = prob_template_;
    const int m = model_.input_dim();
    p.q = Eigen::VectorXd::Zero(n_var_);
    for (int l = 0; l < model_.N; ++l)
      p.q.segment(l * m, m) = 2.0 * (q_lin_map_[l] * x_t + q_lin_const_[l]);
    p.l = l_vec_;
    p.u = rhs_static_ - rhs_xcoef_ * x_t;
    return p;
  }

 private:
  struct RowBuild {
    std::vector<Eigen::Triplet<double>> coeffs;  // row-local (col, value)
    double rhs_static = 0.0;
    Eigen::VectorXd rhs_xcoef;  // u = rhs_static - rhs_xcoef'x
  };

  int idx_v(int k, int r) const { return k * model_.input_dim() + r; }
  int idx_m(int k, int q, int r, int c) const {
    return m_offset_[k][q] + r * model_.state_dim() + c;
  }

  void build() {
    const int n = model_.state_dim();
    const int m = model_.input_dim();
    const int N = model_.N;

    // Powers of A and the input-to-state maps C[k][l] = A^{k-1-l} B.
    A_pow_.assign(N + 1, Eigen::MatrixXd::Identity(n, n));
    for (int k = 1; k <= N; ++k) A_pow_[k] = model_.A * A_pow_[k - 1];
    C_.assign(N + 1, std::vector<Eigen::MatrixXd>());
    for (int k = 0; k <= N; ++k)
      for (int l = 0; l < k; ++l) C_[k].push_back(A_pow_[k - 1 - l] * model_.B);

    // Variable layout: v | M | aux.
    int next = N * m;
    m_offset_.assign(N, std::vector<int>(N, -1));
    for (int k = 1; k < N; ++k)
      for (int q = 0; q < k; ++q) {
        m_offset_[k][q] = next;
        next += m * n;
      }
    n_core_ = next;

    std::vector<RowBuild> rows;
    auto zero_xcoef = [n]() { return Eigen::VectorXd::Zero(n); };

    // Helper appending the robustified constraint  base(v) + worst-case
    // disturbance terms <= rhs  for one facet row `a` read at prediction
    // step k (state rows use a over states, input rows pass k_state = -1).
    auto add_state_row = [&](const Eigen::VectorXd& a, double b, int k) {
      RowBuild main;
      main.rhs_static = b;
      main.rhs_xcoef = (A_pow_[k].transpose() * a);
      for (int l = 0; l < k; ++l) {
        const Eigen::VectorXd coef = C_[k][l].transpose() * a;
        for (int r = 0; r < m; ++r)
          if (coef[r] != 0.0)
            main.coeffs.emplace_back(0, idx_v(l, r), coef[r]);
      }
      for (int q = 0; q < k; ++q) {
        const Eigen::VectorXd y_const = A_pow_[k - 1 - q].transpose() * a;
        const bool has_m = q < k - 1;
        if (!has_m) {
          // Pure constant stage: fold its support into the rhs.
          double s = y_const.dot(w_center_);
          for (int c = 0; c < n; ++c) s += w_radius_[c] * std::abs(y_const[c]);
          main.rhs_static -= s;
          continue;
        }
        // Stage term y_q = y_const + sum_l M[l][q]' B'(A^{k-1-l})' a.
        std::vector<std::pair<int, Eigen::VectorXd>> gains;  // (l, g_l)
        for (int l = q + 1; l < k; ++l)
          gains.emplace_back(l, model_.B.transpose() *
                                    A_pow_[k - 1 - l].transpose() * a);
        main.rhs_static -= y_const.dot(w_center_);
        for (int c = 0; c < n; ++c) {
          for (const auto& [l, g] : gains)
            for (int r = 0; r < m; ++r)
              if (g[r] != 0.0 && w_center_[c] != 0.0)
                main.coeffs.emplace_back(0, idx_m(l, q, r, c),
                                         g[r] * w_center_[c]);
          if (w_radius_[c] <= 0.0) continue;
          const int s_var = next++;
          main.coeffs.emplace_back(0, s_var, w_radius_[c]);
          RowBuild up, dn;  // y_c - s <= -y_const_c ; -y_c - s <= y_const_c
          up.rhs_static = -y_const[c];
          dn.rhs_static = y_const[c];
          up.rhs_xcoef = zero_xcoef();
          dn.rhs_xcoef = zero_xcoef();
          for (const auto& [l, g] : gains)
            for (int r = 0; r < m; ++r)
              if (g[r] != 0.0) {
                up.coeffs.emplace_back(0, idx_m(l, q, r, c), g[r]);
                dn.coeffs.emplace_back(0, idx_m(l, q, r, c), -g[r]);
              }
          up.coeffs.emplace_back(0, s_var, -1.0);
          dn.coeffs.emplace_back(0, s_var, -1.0);
          rows.push_back(std::move(up));
          rows.push_back(std::move(dn));
        }
      }
      rows.push_back(std::move(main));
    };

    auto add_input_row = [&](const Eigen::VectorXd& c_row, double d, int k) {
      RowBuild main;
      main.rhs_static = d;
      main.rhs_xcoef = zero_xcoef();
      for (int r = 0; r < m; ++r)
        if (c_row[r] != 0.0) main.coeffs.emplace_back(0, idx_v(k, r), c_row[r]);
      for (int q = 0; q < k; ++q) {
        // y_q = M[k][q]' c_row, no constant part.
        for (int c = 0; c < n; ++c) {
          if (w_center_[c] != 0.0)
            for (int r = 0; r < m; ++r)
              if (c_row[r] != 0.0)
                main.coeffs.emplace_back(0, idx_m(k, q, r, c),
                                         c_row[r] * w_center_[c]);
          if (w_radius_[c] <= 0.0) continue;
          const int s_var = next++;
          main.coeffs.emplace_back(0, s_var, w_radius_[c]);
          RowBuild up, dn;
          up.rhs_static = 0.0;
          dn.rhs_static = 0.0;
          up.rhs_xcoef = zero_xcoef();
          dn.rhs_xcoef = zero_xcoef();
          for (int r = 0; r < m; ++r)
            if (c_row[r] != 0.0) {
              up.coeffs.emplace_back(0, idx_m(k, q, r, c), c_row[r]);
              dn.coeffs.emplace_back(0, idx_m(k, q, r, c), -c_row[r]);
            }
          up.coeffs.emplace_back(0, s_var, -1.0);
          dn.coeffs.emplace_back(0, s_var, -1.0);
          rows.push_back(std::move(up));
          rows.push_back(std::move(dn));
        }
      }
      rows.push_back(std::move(main));
    };

    for (int k = 1; k < N; ++k)
      for (int r = 0; r < state_set_.num_rows(); ++r)
        add_state_row(state_set_.H().row(r).transpose(), state_set_.h()[r], k);
    for (int r = 0; r < terminal_.num_rows(); ++r)
      add_state_row(terminal_.H().row(r).transpose(), terminal_.h()[r], N);
    for (int k = 0; k < N; ++k)
      for (int r = 0; r < model_.U.num_rows(); ++r)
        add_input_row(model_.U.H().row(r).transpose(), model_.U.h()[r], k);

    n_var_ = next;
    const int n_rows = static_cast<int>(rows.size());

    // Hessian: exact stage/terminal curvature on v, the tie-break
    // penalty on M, nothing on the aux variables.
    Eigen::MatrixXd Pv = Eigen::MatrixXd::Zero(N * m, N * m);
    for (int k = 1; k <= N; ++k) {
      const Eigen::MatrixXd& Wk = (k == N) ? P_terminal_ : model_.Q_stage;
      for (int l1 = 0; l1 < k; ++l1)
        for (int l2 = 0; l2 < k; ++l2)
          Pv.block(l1 * m, l2 * m, m, m) +=
              C_[k][l1].transpose() * Wk * C_[k][l2];
    }
    for (int k = 0; k < N; ++k)
      Pv.block(k * m, k * m, m, m) += model_.R_stage;
    Pv *= 2.0;

    std::vector<Eigen::Triplet<double>> p_trips;
    for (int i = 0; i < N * m; ++i)
      for (int j = 0; j < N * m; ++j)
        if (Pv(i, j) != 0.0) p_trips.emplace_back(i, j, Pv(i, j));
    // The same tie-break curvature goes on the M entries and on the
    // epigraph variables; without it the optimal face is flat in both
    // and the splitting iteration crawls.
    for (int i = N * m; i < n_var_; ++i)
      p_trips.emplace_back(i, i, 2.0 * opts_.m_regularization);
    prob_template_.P.resize(n_var_, n_var_);
    prob_template_.P.setFromTriplets(p_trips.begin(), p_trips.end());

    std::vector<Eigen::Triplet<double>> a_trips;
    rhs_static_.resize(n_rows);
    rhs_xcoef_.resize(n_rows, n);
    for (int i = 0; i < n_rows; ++i) {
      for (const auto& t : rows[i].coeffs)
        a_trips.emplace_back(i, t.col(), t.value());
      rhs_static_[i] = rows[i].rhs_static;
      rhs_xcoef_.row(i) = rows[i].rhs_xcoef.transpose();
    }
    prob_template_.A.resize(n_rows, n_var_);
    prob_template_.A.setFromTriplets(a_trips.begin(), a_trips.end());
    l_vec_ = Eigen::VectorXd::Constant(
        n_rows, -std::numeric_limits<double>::infinity());
    prob_template_.l = l_vec_;

    // Linear-term maps: q_v[l] = 2 (map_l x_t + const_l).
    q_lin_map_.assign(N, Eigen::MatrixXd::Zero(m, n));
    q_lin_const_.assign(N, Eigen::VectorXd::Zero(m));
    for (int k = 1; k <= N; ++k) {
      const Eigen::MatrixXd& Wk = (k == N) ? P_terminal_ : model_.Q_stage;
      for (int l = 0; l < k; ++l) {
        q_lin_map_[l] += C_[k][l].transpose() * Wk * A_pow_[k];
        q_lin_const_[l] -= C_[k][l].transpose() * Wk * model_.x_ref;
      }
    }

    // Seed the solver (and its equilibration) with the vectors of a
    // representative instance; zero linear terms would mis-normalize the
    // cost scaling for every later solve.
    prob_template_.q = Eigen::VectorXd::Zero(n_var_);
    for (int l = 0; l < N; ++l)
      prob_template_.q.segment(l * m, m) =
          2.0 * (q_lin_map_[l] * model_.x_S + q_lin_const_[l]);
    prob_template_.u = rhs_static_ - rhs_xcoef_ * model_.x_S;

    QpSettings qs = opts_.qp;
    qp_.emplace(prob_template_, qs);
  }

  double objective_constant(const Eigen::VectorXd& x_t) const {
    double c = 0.0;
    for (int k = 0; k <= model_.N; ++k) {
      const Eigen::MatrixXd& Wk =
          (k == model_.N) ? P_terminal_ : model_.Q_stage;
      const Eigen::VectorXd e = A_pow_[k] * x_t - model_.x_ref;
      c += e.dot(Wk * e);
    }
    return c;
  }

  MpcDecision extract_decision(const Eigen::VectorXd& z,
                               const Eigen::VectorXd& x_t) const {
    const int n = model_.state_dim();
    const int m = model_.input_dim();
    const int N = model_.N;
    MpcDecision dec;
    dec.v.reserve(N);
    for (int k = 0; k < N; ++k) dec.v.push_back(z.segment(k * m, m));
    dec.M.assign(N, std::vector<Eigen::MatrixXd>());
    for (int k = 0; k < N; ++k)
      for (int q = 0; q < k; ++q) {
        Eigen::MatrixXd Mk(m, n);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c) Mk(r, c) = z[idx_m(k, q, r, c)];
        dec.M[k].push_back(std::move(Mk));
      }
    dec.nominal_states.push_back(x_t);
    for (int k = 0; k < N; ++k)
      dec.nominal_states.push_back(model_.A * dec.nominal_states.back() +
                                   model_.B * dec.v[k]);
    return dec;
  }

  ControlModel model_;
  Polytope state_set_;
  Polytope terminal_;
  Eigen::MatrixXd P_terminal_;
  MpcOptions opts_;

  Eigen::VectorXd w_center_, w_radius_;
  std::vector<Eigen::MatrixXd> A_pow_;
  std::vector<std::vector<Eigen::MatrixXd>> C_;
  std::vector<std::vector<int>> m_offset_;
  int n_core_ = 0, n_var_ = 0;

  QpProblem prob_template_;
  Eigen::VectorXd rhs_static_, l_vec_;
  Eigen::MatrixXd rhs_xcoef_;
  std::vector<Eigen::MatrixXd> q_lin_map_;
  std::vector<Eigen::VectorXd> q_lin_const_;
  std::optional<QpSolver> qp_;
};

/// Controller adapter for rollouts.
inline Controller make_controller(MpcStepSolver& solver) {
  return [&solver](const Eigen::VectorXd& x) {
    const StepSolution sol = solver.solve(x);
    ControlStep out;
    out.feasible = sol.status == QpStatus::optimal;
    if (out.feasible) out.u = sol.u;
    return out;
  };
}

}  // namespace iclmpc
