#pragma once

// The outer learning loop: warm-start excitation, per-iteration estimate
// selection (SVM path, convex-hull adoption in robust mode, bounded
// inflation on infeasibility), closed-loop rollouts and certificate
// tracking, until a certificate closes or the iteration cap is hit.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "iclmpc/estimator.hpp"
#include "iclmpc/io.hpp"
#include "iclmpc/rmpc.hpp"
#include "iclmpc/sampling.hpp"
#include "iclmpc/system.hpp"

namespace iclmpc {

struct IclConfig {
  CertificateMode mode = CertificateMode::probabilistic;
  double epsilon = 0.3;
  double beta = 0.01;
  SvmConfig svm;
  int n_svm_samples = 1000;
  int warm_start_trajectories = 2;
  int max_iterations = 200;
  double scale_gamma = 1.25;  // inflation factor on start-infeasible sets
  int scale_max = 8;
  uint64_t master_seed = 0;
  MpcOptions mpc;
  std::string qp_dump_dir;  // when nonempty, per-step QPs are dumped here
};

/// Per-iteration snapshot for persistence and plot export.
struct IterationInfo {
  int j = 0;
  ConstraintEstimate estimate;
  bool estimate_changed = false;
  int scalings = 0;  // inflation rounds applied before feasibility
  std::optional<SvmModel> model;  // present when the SVM was rebuilt
};

struct RunState {
  int j = 0;  // last iteration index reached
  ConstraintEstimate estimate;
  Polytope terminal;
  Certificate certificate;
  CertificateMode mode = CertificateMode::probabilistic;
  bool aborted = false;
  std::string abort_reason;
};

struct RunResult {
  RunState state;
  std::vector<IterationRecord> records;  // warm-start runs first
  std::vector<IterationInfo> iterations;
  Eigen::MatrixXd P_terminal;
};

/// Random-input excitation runs seeding the classifier. Inputs are drawn
/// uniformly from U; the records are training data only and never touch
/// the certificate.
inline std::vector<IterationRecord> warm_start(const LtiTask& task, int n_traj,
                                               RngStream& rng) {
  if (n_traj < 1) throw InvalidArgumentError("warm_start: n_traj >= 1");
  std::vector<IterationRecord> out;
  const auto box = bounding_box(task.U);
  for (int i = 0; i < n_traj; ++i) {
    Controller random_inputs = [&](const Eigen::VectorXd&) {
      ControlStep s;
      s.feasible = true;
      s.u = sample_uniform(task.U, rng, box.first, box.second);
      return s;
    };
    IterationRecord rec = rollout(task, random_inputs, rng, 0);
    rec.warm_start = true;
    out.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

inline bool has_violation(const IterationRecord& rec) {
  for (bool f : rec.flags)
    if (!f) return true;
  return false;
}

}  // namespace detail

/// Controller wrapper that writes qp_<j>_<t>.json next to the run output
/// on every solve, for cross-checking against an external QP solver.
inline Controller make_dumping_controller(MpcStepSolver& solver,
                                          const std::string& dir, int j) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  return [&solver, dir, j, t = 0](const Eigen::VectorXd& x) mutable {
    const StepSolution sol = solver.solve(x);
    json dump;
    dump["iteration"] = j;
    dump["time_step"] = t;
    dump["state"] = vector_to_json(x);
    dump["problem"] = qp_problem_to_json(solver.problem_at(x));
    dump["status"] = sol.status == QpStatus::optimal
                         ? "optimal"
                         : (sol.status == QpStatus::infeasible ? "infeasible"
                                                               : "max_iter");
    if (sol.status == QpStatus::optimal) {
      dump["u"] = vector_to_json(sol.u);
      dump["objective"] = sol.report.objective;
    }
    std::ofstream out(fs::path(dir) /
                      ("qp_" + std::to_string(j) + "_" + std::to_string(t) +
                       ".json"));
    out << dump.dump(2) << "\n";
    ++t;
    ControlStep step;
    step.feasible = sol.status == QpStatus::optimal;
    if (step.feasible) step.u = sol.u;
    return step;
  };
}

/// Executes the full iterative loop on a validated task.
inline RunResult run(const LtiTask& task, const IclConfig& cfg) {
  task.validate();
  if (cfg.mode == CertificateMode::probabilistic &&
      !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0))
    throw InvalidArgumentError("run: probabilistic mode needs epsilon in (0,1)");
  if (cfg.max_iterations < 1)
    throw InvalidArgumentError("run: max_iterations >= 1");
  const ControlModel model = control_model(task);
  const Eigen::MatrixXd P = terminal_cost(model);
  const int steps = task.T - task.N;

  RunResult out;
  out.P_terminal = P;
  out.state.mode = cfg.mode;

  RngStream ws_rng(derive_seed(cfg.master_seed, 1));
  out.records = warm_start(task, cfg.warm_start_trajectories, ws_rng);

  ConstraintEstimate estimate = init_estimate(task);
  Certificate cert = make_certificate(cfg.mode, cfg.epsilon, cfg.beta);
  Polytope terminal = terminal_set(model, estimate.state_set, steps);

  bool pending_violations = false;
  for (const auto& rec : out.records)
    pending_violations = pending_violations || detail::has_violation(rec);

  for (int j = 1; j <= cfg.max_iterations; ++j) {
    out.state.j = j;
    IterationInfo info;
    info.j = j;

    // Rebuild the SVM set only when the latest data brought new
    // violation points; single-class or degenerate data keeps the
    // previous estimate in place.
    if (pending_violations) {
      try {
        RngStream svm_rng(derive_seed(cfg.master_seed, 2, j));
        SvmModel model_out;
        estimate = svm_update(out.records, task, cfg.svm, cfg.n_svm_samples,
                              svm_rng, j, &model_out);
        info.model = std::move(model_out);
        info.estimate_changed = true;
      } catch (const SingleClassError&) {
      } catch (const DegenerateCloudError&) {
      }
      pending_violations = false;
    }

    // Robust branch: adopt the hull estimate the moment it is workable,
    // close the certificate and stop updating.
    if (cfg.mode == CertificateMode::robust) {
      try {
        ConstraintEstimate cvx = cvx_update(out.records, task, j);
        Polytope term_cvx = terminal_set(model, cvx.state_set, steps);
        if (!is_empty(term_cvx)) {
          MpcStepSolver probe(model, cvx.state_set, term_cvx, P, cfg.mpc);
          if (probe.solve(task.x_S).status == QpStatus::optimal) {
            cert.j_bar = j;
            info.estimate = cvx;
            info.estimate_changed = true;
            out.iterations.push_back(std::move(info));
            out.state.estimate = std::move(cvx);
            out.state.terminal = std::move(term_cvx);
            out.state.certificate = cert;
            return out;
          }
        }
      } catch (const DegenerateCloudError&) {
      }
    }

    // Start-of-iteration feasibility with the selected estimate; inflate
    // a learned set a bounded number of times if the problem or the
    // terminal set is initially unworkable. Should the whole schedule
    // fail (a hull facet through the origin never opens under
    // origin-anchored scaling), fall back to the known-only set, which
    // is the schedule's own limit once intersected with the known rows.
    std::optional<MpcStepSolver> solver;
    ConstraintEstimate active = estimate;
    Polytope term = terminal_set(model, active.state_set, steps);
    bool workable = false;
    for (int s_round = 0; s_round <= cfg.scale_max + 1; ++s_round) {
      if (s_round > 0) {
        if (estimate.method == EstimateMethod::known_only) break;
        if (s_round <= cfg.scale_max) {
          active = scaled_estimate(estimate, std::pow(cfg.scale_gamma, s_round),
                                   task.Z_known_state, j);
        } else {
          active = init_estimate(task);
          active.source_iteration = j;
        }
        term = terminal_set(model, active.state_set, steps);
      }
      if (is_empty(term)) continue;
      solver.emplace(model, active.state_set, term, P, cfg.mpc);
      if (solver->solve(task.x_S).status == QpStatus::optimal) {
        workable = true;
        info.scalings = s_round;
        break;
      }
      solver.reset();
    }
    if (!workable) {
      out.state.aborted = true;
      out.state.abort_reason =
          "MPC infeasible at the initial state after " +
          std::to_string(cfg.scale_max) + " inflation rounds (iteration " +
          std::to_string(j) + ")";
      out.state.estimate = estimate;
      out.state.terminal = term;
      out.state.certificate = cert;
      return out;
    }
    if (info.scalings > 0) {
      estimate = active;
      info.estimate_changed = true;
    }
    info.estimate = estimate;

    RngStream iter_rng(derive_seed(cfg.master_seed, 3, j));
    solver->reset_warm_start();
    Controller controller = make_controller(*solver);
    if (!cfg.qp_dump_dir.empty())
      controller = make_dumping_controller(*solver, cfg.qp_dump_dir, j);
    IterationRecord rec = rollout(task, controller, iter_rng, j);
    pending_violations = detail::has_violation(rec);
    const bool success = rec.success;
    const bool changed = info.estimate_changed;
    out.records.push_back(std::move(rec));
    out.iterations.push_back(std::move(info));

    terminal = term;
    if (cfg.mode == CertificateMode::probabilistic) {
      cert = record_outcome(cert, success, changed,
                            estimate.source_iteration);
      if (cert.closed()) break;
    }
  }

  out.state.estimate = estimate;
  out.state.terminal = terminal;
  out.state.certificate = cert;
  if (!cert.closed()) {
    out.state.aborted = false;
    out.state.abort_reason = "iteration cap reached with an open certificate";
  }
  return out;
}

}  // namespace iclmpc
