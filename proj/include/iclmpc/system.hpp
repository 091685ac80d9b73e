#pragma once

// Disturbed LTI plant, disturbance sampling, closed-loop rollout and the
// ground-truth feasibility oracle. The full state-constraint set lives
// only here and in the records' flags; controller-side modules receive
// constraint estimates, never Z_true_state.

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "iclmpc/errors.hpp"
#include "iclmpc/geometry.hpp"
#include "iclmpc/rng.hpp"

namespace iclmpc {

/// One repetitive control task: plant, disturbance support, the true
/// state-constraint set and its known subset, cost, horizons, terminal
/// feedback gain.
struct LtiTask {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Polytope W;              // disturbance support
  Polytope Z_true_state;   // all state constraint rows (oracle side)
  Polytope Z_known_state;  // the rows known to the control designer
  Polytope U;              // input constraints, fully known
  Eigen::VectorXd x_S;
  Eigen::VectorXd x_ref;
  int T = 0;  // task length
  int N = 0;  // MPC prediction horizon, N < T
  Eigen::MatrixXd Q_stage;
  Eigen::MatrixXd R_stage;
  Eigen::MatrixXd K;  // stabilizing feedback for the terminal set

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  void validate() const {
    const int n = state_dim();
    const int m = input_dim();
    if (A.cols() != n || B.rows() != n)
      throw InvalidArgumentError("LtiTask: A/B dimensions disagree");
    if (W.dim() != n || Z_true_state.dim() != n || Z_known_state.dim() != n)
      throw InvalidArgumentError("LtiTask: state-set dimension mismatch");
    if (U.dim() != m) throw InvalidArgumentError("LtiTask: U dimension mismatch");
    if (x_S.size() != n || x_ref.size() != n)
      throw InvalidArgumentError("LtiTask: x_S/x_ref dimension mismatch");
    if (T < 1 || N < 1 || N >= T)
      throw InvalidArgumentError("LtiTask: need 1 <= N < T");
    if (Q_stage.rows() != n || Q_stage.cols() != n || R_stage.rows() != m ||
        R_stage.cols() != m || K.rows() != m || K.cols() != n)
      throw InvalidArgumentError("LtiTask: cost/gain dimension mismatch");

    // Every known row must appear verbatim among the true rows.
    for (int i = 0; i < Z_known_state.num_rows(); ++i) {
      bool found = false;
      for (int j = 0; j < Z_true_state.num_rows() && !found; ++j) {
        found = (Z_known_state.H().row(i) - Z_true_state.H().row(j))
                        .lpNorm<Eigen::Infinity>() < 1e-12 &&
                std::abs(Z_known_state.h()[i] - Z_true_state.h()[j]) < 1e-12;
      }
      if (!found)
        throw InvalidArgumentError(
            "LtiTask: known constraint rows are not a subset of the true rows");
    }

    if (!contains(Z_true_state, Eigen::VectorXd::Zero(n)))
      throw InvalidArgumentError("LtiTask: origin violates state constraints");
    if (!contains(U, Eigen::VectorXd::Zero(m)))
      throw InvalidArgumentError("LtiTask: origin violates input constraints");

    const Eigen::MatrixXd Acl = A + B * K;
    const double sr =
        Acl.eigenvalues().cwiseAbs().maxCoeff();
    if (sr >= 1.0)
      throw InvalidArgumentError("LtiTask: A+BK is not Schur stable");

    if (!box_bounds(W).has_value()) {
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) {
        for (double sgn : {1.0, -1.0}) {
          dir[i] = sgn;
          try {
            support(W, dir);
          } catch (const UnboundedError&) {
            throw InvalidArgumentError("LtiTask: W is unbounded");
          }
          dir[i] = 0.0;
        }
      }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(Q_stage);
    if (eq.eigenvalues().minCoeff() < -1e-9)
      throw InvalidArgumentError("LtiTask: Q_stage is not PSD");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(R_stage);
    if (er.eigenvalues().minCoeff() <= 0.0)
      throw InvalidArgumentError("LtiTask: R_stage is not PD");
  }
};

/// The slice of a task the control designer is allowed to see. Controller
/// modules take this instead of LtiTask, so no controller code path can
/// read the true constraint set even by accident.
struct ControlModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Polytope W;
  Polytope U;
  Polytope Z_known_state;
  Eigen::VectorXd x_S;
  Eigen::VectorXd x_ref;
  int T = 0;
  int N = 0;
  Eigen::MatrixXd Q_stage;
  Eigen::MatrixXd R_stage;
  Eigen::MatrixXd K;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
};

inline ControlModel control_model(const LtiTask& t) {
  return ControlModel{t.A,     t.B, t.W, t.U,       t.Z_known_state, t.x_S,
                      t.x_ref, t.T, t.N, t.Q_stage, t.R_stage,       t.K};
}

/// Absolute tolerance separating genuine constraint violations from
/// solver noise when flagging trajectory points.
inline constexpr double kFlagTol = 1e-7;

/// Everything one task execution produced. Aborted iterations (the MPC
/// became infeasible mid-rollout) carry the failing time index and
/// truncated trajectories; they are never counted as successes.
struct IterationRecord {
  int j = 0;  // iteration index; 0 marks warm-start excitation runs
  std::vector<Eigen::VectorXd> states;        // x_0 .. x_T
  std::vector<Eigen::VectorXd> inputs;        // u_0 .. u_{T-1}
  std::vector<Eigen::VectorXd> disturbances;  // w_0 .. w_{T-1}
  std::vector<bool> flags;  // true = satisfies the true state constraints
  bool success = false;
  double cost = 0.0;
  std::optional<int> aborted_at;
  bool warm_start = false;
};

/// One plant step x+ = Ax + Bu + w.
inline Eigen::VectorXd step(const LtiTask& task, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u,
                            const Eigen::VectorXd& w) {
  if (x.size() != task.state_dim() || u.size() != task.input_dim() ||
      w.size() != task.state_dim())
    throw DimensionError("step: dimension mismatch");
  return task.A * x + task.B * u + w;
}

inline double stage_cost(const LtiTask& task, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u) {
  const Eigen::VectorXd e = x - task.x_ref;
  return e.dot(task.Q_stage * e) + u.dot(task.R_stage * u);
}

/// Uniform draw on the (axis-aligned box) disturbance support.
inline Eigen::VectorXd sample_disturbance(const Polytope& W, RngStream& rng) {
  auto bb = box_bounds(W);
  if (!bb)
    throw UnsupportedDistributionError(
        "sample_disturbance: only box supports are sampled");
  const auto& [lo, hi] = *bb;
  if ((lo.array() > hi.array()).any())
    throw EmptySetError("sample_disturbance: empty box");
  return rng.uniform_box(lo, hi);
}

/// Oracle flags for a realized trajectory, evaluated post hoc.
inline std::vector<bool> classify_trajectory(
    const LtiTask& task, const std::vector<Eigen::VectorXd>& states) {
  std::vector<bool> flags;
  flags.reserve(states.size());
  for (const auto& x : states)
    flags.push_back(contains(task.Z_true_state, x, kFlagTol));
  return flags;
}

/// Controller interface used by rollouts: given the measured state,
/// either an input or an infeasibility signal.
struct ControlStep {
  bool feasible = false;
  Eigen::VectorXd u;
};
using Controller = std::function<ControlStep(const Eigen::VectorXd&)>;

/// Closed-loop simulation of one iteration against a pre-drawn
/// disturbance sequence. Flags, success verdict and realized cost are
/// attached after the loop completes.
inline IterationRecord rollout_with_disturbances(
    const LtiTask& task, const Controller& controller,
    const std::vector<Eigen::VectorXd>& w_seq, int j) {
  if (static_cast<int>(w_seq.size()) != task.T)
    throw DimensionError("rollout: need exactly T disturbances");
  IterationRecord rec;
  rec.j = j;
  rec.states.push_back(task.x_S);
  for (int t = 0; t < task.T; ++t) {
    const ControlStep ctrl = controller(rec.states.back());
    if (!ctrl.feasible) {
      rec.aborted_at = t;
      break;
    }
    rec.inputs.push_back(ctrl.u);
    rec.disturbances.push_back(w_seq[t]);
    rec.states.push_back(step(task, rec.states.back(), ctrl.u, w_seq[t]));
  }
  rec.flags = classify_trajectory(task, rec.states);
  bool all_ok = true;
  for (bool f : rec.flags) all_ok = all_ok && f;
  rec.success = all_ok && !rec.aborted_at.has_value();
  rec.cost = 0.0;
  for (size_t t = 0; t < rec.inputs.size(); ++t)
    rec.cost += stage_cost(task, rec.states[t], rec.inputs[t]);
  return rec;
}

/// Draws the disturbance sequence up front (so paired comparisons can
/// reuse it) and simulates.
inline IterationRecord rollout(const LtiTask& task, const Controller& controller,
                               RngStream& rng, int j) {
  std::vector<Eigen::VectorXd> w_seq;
  w_seq.reserve(task.T);
  for (int t = 0; t < task.T; ++t) w_seq.push_back(sample_disturbance(task.W, rng));
  return rollout_with_disturbances(task, controller, w_seq, j);
}

}  // namespace iclmpc
