#pragma once

// Scenario files, Monte Carlo validation with paired disturbance draws,
// performance-loss metrics and run-directory persistence.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "iclmpc/icl.hpp"
#include "iclmpc/io.hpp"
#include "iclmpc/rmpc.hpp"

namespace iclmpc {

struct Scenario {
  std::string name = "scenario";
  LtiTask task;
  IclConfig icl;
  int monte_carlo_trials = 100;
  std::string output_dir;
  bool dump_qp = false;
};

namespace detail {

inline void require_field(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("scenario: missing field '" + key + "'");
}

}  // namespace detail

/// Parses and fully validates a scenario document (schema version 1).
/// Every task invariant is checked here so a malformed file fails before
/// any run starts.
inline Scenario scenario_from_json(const json& j) {
  if (j.value("version", 0) != 1)
    throw ConfigError("scenario: unsupported or missing schema version");
  for (const char* key :
       {"system", "disturbance_support", "state_constraints",
        "input_constraints", "initial_state", "reference", "task_length",
        "horizon", "stage_cost", "mode", "master_seed"})
    detail::require_field(j, key);

  const json& sys = j["system"];
  Eigen::MatrixXd A = matrix_from_json(sys.at("A"), "system.A");
  Eigen::MatrixXd B = matrix_from_json(sys.at("B"), "system.B");

  Polytope W = polytope_from_json(j["disturbance_support"], "disturbance_support");
  const json& sc = j["state_constraints"];
  Polytope known = polytope_from_json(sc.at("known"), "state_constraints.known");
  Polytope true_set = known;
  if (sc.contains("unknown") && !sc["unknown"].is_null()) {
    Polytope unknown =
        polytope_from_json(sc["unknown"], "state_constraints.unknown");
    true_set = intersect(known, unknown);
  }
  Polytope U = polytope_from_json(j["input_constraints"], "input_constraints");

  Eigen::VectorXd x_S = vector_from_json(j["initial_state"], "initial_state");
  Eigen::VectorXd x_ref = vector_from_json(j["reference"], "reference");
  const int T = j["task_length"].get<int>();
  const int N = j["horizon"].get<int>();
  if (N >= T) throw ConfigError("scenario: horizon must satisfy N < T");

  const json& cost = j["stage_cost"];
  Eigen::MatrixXd Q = matrix_from_json(cost.at("Q"), "stage_cost.Q");
  Eigen::MatrixXd R = matrix_from_json(cost.at("R"), "stage_cost.R");

  Eigen::MatrixXd K;
  if (!j.contains("feedback_gain") || j["feedback_gain"].is_string()) {
    const std::string kind =
        j.contains("feedback_gain") ? j["feedback_gain"].get<std::string>()
                                    : std::string("lqr");
    if (kind != "lqr")
      throw ConfigError("scenario: feedback_gain must be 'lqr' or a matrix");
    K = lqr_gain(A, B, Q, R);
  } else {
    K = matrix_from_json(j["feedback_gain"], "feedback_gain");
  }

  Scenario s;
  s.name = j.value("name", std::string("scenario"));
  s.task = LtiTask{std::move(A), std::move(B), std::move(W),
                   std::move(true_set), std::move(known), std::move(U),
                   std::move(x_S), std::move(x_ref), T, N,
                   std::move(Q), std::move(R), std::move(K)};

  const std::string mode = j["mode"].get<std::string>();
  if (mode == "prob") {
    s.icl.mode = CertificateMode::probabilistic;
  } else if (mode == "robust") {
    s.icl.mode = CertificateMode::robust;
  } else {
    throw ConfigError("scenario: mode must be 'prob' or 'robust'");
  }
  s.icl.epsilon = j.value("epsilon", 0.3);
  s.icl.beta = j.value("beta", 0.01);
  if (s.icl.mode == CertificateMode::probabilistic &&
      !(s.icl.epsilon > 0.0 && s.icl.epsilon < 1.0))
    throw ConfigError("scenario: epsilon must lie in (0,1) for mode 'prob'");
  if (!(s.icl.beta > 0.0 && s.icl.beta < 1.0))
    throw ConfigError("scenario: beta must lie in (0,1)");

  if (j.contains("svm")) {
    const json& svm = j["svm"];
    if (svm.contains("gamma") && svm["gamma"].is_number())
      s.icl.svm.gamma = svm["gamma"].get<double>();
    else
      s.icl.svm.gamma = default_rbf_gamma(s.task.Z_known_state);
    s.icl.svm.C = svm.value("C", 100.0);
    s.icl.svm.feasible_weight = svm.value("feasible_weight", 1.0);
    s.icl.svm.infeasible_weight = svm.value("infeasible_weight", 1.0);
  } else {
    s.icl.svm.gamma = default_rbf_gamma(s.task.Z_known_state);
  }
  s.icl.n_svm_samples = j.value("n_svm_samples", 1000);
  s.icl.warm_start_trajectories = j.value("warm_start_trajectories", 2);
  s.icl.max_iterations = j.value("max_iterations", 200);
  s.icl.master_seed = j["master_seed"].get<uint64_t>();
  s.monte_carlo_trials = j.value("monte_carlo_trials", 100);
  s.output_dir = j.value("output_dir", std::string());
  s.dump_qp = j.value("dump_qp", false);
  if (s.icl.n_svm_samples < s.task.state_dim() + 1)
    throw ConfigError("scenario: n_svm_samples too small");
  if (s.monte_carlo_trials < 1)
    throw ConfigError("scenario: monte_carlo_trials must be >= 1");

  try {
    s.task.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("scenario: invalid task: ") + e.what());
  }
  return s;
}

inline json scenario_to_json(const Scenario& s) {
  json out;
  out["version"] = 1;
  out["name"] = s.name;
  out["system"] = {{"A", matrix_to_json(s.task.A)},
                   {"B", matrix_to_json(s.task.B)}};
  out["disturbance_support"] = polytope_to_json(s.task.W);
  // The resolved file stores the known rows and the residual unknown
  // rows (true set = known rows followed by unknown rows).
  const int nk = s.task.Z_known_state.num_rows();
  const int nt = s.task.Z_true_state.num_rows();
  json state;
  state["known"] = polytope_to_json(s.task.Z_known_state);
  if (nt > nk) {
    state["unknown"] = polytope_to_json(
        Polytope(s.task.Z_true_state.H().bottomRows(nt - nk),
                 s.task.Z_true_state.h().tail(nt - nk)));
  } else {
    state["unknown"] = nullptr;
  }
  out["state_constraints"] = std::move(state);
  out["input_constraints"] = polytope_to_json(s.task.U);
  out["initial_state"] = vector_to_json(s.task.x_S);
  out["reference"] = vector_to_json(s.task.x_ref);
  out["task_length"] = s.task.T;
  out["horizon"] = s.task.N;
  out["stage_cost"] = {{"Q", matrix_to_json(s.task.Q_stage)},
                       {"R", matrix_to_json(s.task.R_stage)}};
  out["feedback_gain"] = matrix_to_json(s.task.K);
  out["mode"] =
      s.icl.mode == CertificateMode::probabilistic ? "prob" : "robust";
  out["epsilon"] = s.icl.epsilon;
  out["beta"] = s.icl.beta;
  out["svm"] = {{"gamma", s.icl.svm.gamma},
                {"C", s.icl.svm.C},
                {"feasible_weight", s.icl.svm.feasible_weight},
                {"infeasible_weight", s.icl.svm.infeasible_weight}};
  out["n_svm_samples"] = s.icl.n_svm_samples;
  out["warm_start_trajectories"] = s.icl.warm_start_trajectories;
  out["max_iterations"] = s.icl.max_iterations;
  out["master_seed"] = s.icl.master_seed;
  out["monte_carlo_trials"] = s.monte_carlo_trials;
  out["output_dir"] = s.output_dir;
  out["dump_qp"] = s.dump_qp;
  return out;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
  return scenario_from_json(j);
}

/// Empirical failure probability and paired-cost statistics for a frozen
/// estimate, against the baseline controller that knows the true set.
struct ValidationReport {
  double eps_hat = 0.0;            // failure fraction vs true constraints
  double eps_hat_estimated = 0.0;  // violation fraction vs the estimate
  double mean_cost = 0.0;          // over successful trials
  double mean_cost_all = 0.0;      // over all completed trials
  double baseline_mean_cost = 0.0;
  double cost_ratio = 0.0;
  int trials = 0;
  int failures = 0;
  int aborted = 0;
};

inline double performance_loss(const ValidationReport& r) {
  return r.mean_cost - r.baseline_mean_cost;
}

/// Runs paired rollouts of the frozen-estimate controller and the
/// true-set baseline on identical disturbance draws. Trials derive their
/// streams from (seed, trial index), so any execution order gives the
/// same aggregates.
inline ValidationReport monte_carlo_validate(
    const LtiTask& task, const ConstraintEstimate& estimate,
    const Polytope& terminal, const Eigen::MatrixXd& P_terminal, int n_trials,
    uint64_t seed, int threads = 0, const MpcOptions& mpc = {}) {
  if (n_trials < 1)
    throw InvalidArgumentError("monte_carlo_validate: n_trials >= 1");
  const ControlModel model = control_model(task);
  const Polytope terminal_true =
      terminal_set(model, task.Z_true_state, task.T - task.N);

  struct TrialOutcome {
    bool failure = false;
    bool est_violation = false;
    bool aborted = false;
    double cost = 0.0;
    double base_cost = 0.0;
    bool base_ok = false;
  };
  std::vector<TrialOutcome> outcomes(n_trials);

  auto run_range = [&](int begin, int end) {
    // Per-worker solvers: workspaces are not shared across threads.
    MpcStepSolver frozen(model, estimate.state_set, terminal, P_terminal, mpc);
    MpcStepSolver baseline(model, task.Z_true_state, terminal_true, P_terminal,
                           mpc);
    const double est_tol = default_membership_tol(estimate.state_set);
    for (int m = begin; m < end; ++m) {
      RngStream rng(derive_seed(seed, 4, static_cast<uint64_t>(m)));
      std::vector<Eigen::VectorXd> w_seq;
      w_seq.reserve(task.T);
      for (int t = 0; t < task.T; ++t)
        w_seq.push_back(sample_disturbance(task.W, rng));

      frozen.reset_warm_start();
      const IterationRecord rec = rollout_with_disturbances(
          task, make_controller(frozen), w_seq, m + 1);
      baseline.reset_warm_start();
      const IterationRecord base = rollout_with_disturbances(
          task, make_controller(baseline), w_seq, m + 1);

      TrialOutcome& out = outcomes[m];
      out.failure = !rec.success;
      out.aborted = rec.aborted_at.has_value();
      out.cost = rec.cost;
      for (const auto& x : rec.states)
        if (!contains(estimate.state_set, x, est_tol)) out.est_violation = true;
      out.base_ok = base.success;
      out.base_cost = base.cost;
    }
  };

  int n_workers = threads > 0 ? threads
                              : static_cast<int>(std::max(
                                    1u, std::thread::hardware_concurrency()));
  n_workers = std::min(n_workers, n_trials);
  if (n_workers <= 1) {
    run_range(0, n_trials);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_trials + n_workers - 1) / n_workers;
    for (int w = 0; w < n_workers; ++w) {
      const int begin = w * chunk;
      const int end = std::min(n_trials, begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  ValidationReport rep;
  rep.trials = n_trials;
  int n_success = 0, n_completed = 0, n_est_viol = 0, n_base = 0;
  double cost_success = 0.0, cost_all = 0.0, cost_base = 0.0;
  for (const auto& out : outcomes) {
    if (out.failure) ++rep.failures;
    if (out.aborted) ++rep.aborted;
    if (out.est_violation) ++n_est_viol;
    if (!out.aborted) {
      ++n_completed;
      cost_all += out.cost;
    }
    if (!out.failure) {
      ++n_success;
      cost_success += out.cost;
    }
    if (out.base_ok) {
      ++n_base;
      cost_base += out.base_cost;
    }
  }
  rep.eps_hat = static_cast<double>(rep.failures) / n_trials;
  rep.eps_hat_estimated = static_cast<double>(n_est_viol) / n_trials;
  rep.mean_cost = n_success > 0 ? cost_success / n_success : 0.0;
  rep.mean_cost_all = n_completed > 0 ? cost_all / n_completed : 0.0;
  rep.baseline_mean_cost = n_base > 0 ? cost_base / n_base : 0.0;
  rep.cost_ratio =
      rep.baseline_mean_cost > 0.0 ? rep.mean_cost / rep.baseline_mean_cost : 0.0;
  return rep;
}

inline json validation_to_json(const ValidationReport& r) {
  return json{{"eps_hat", r.eps_hat},
              {"eps_hat_estimated", r.eps_hat_estimated},
              {"mean_cost", r.mean_cost},
              {"mean_cost_all", r.mean_cost_all},
              {"baseline_mean_cost", r.baseline_mean_cost},
              {"cost_ratio", r.cost_ratio},
              {"performance_loss", performance_loss(r)},
              {"trials", r.trials},
              {"failures", r.failures},
              {"aborted", r.aborted}};
}

inline ValidationReport validation_from_json(const json& j) {
  ValidationReport r;
  r.eps_hat = j.at("eps_hat").get<double>();
  r.eps_hat_estimated = j.at("eps_hat_estimated").get<double>();
  r.mean_cost = j.at("mean_cost").get<double>();
  r.mean_cost_all = j.at("mean_cost_all").get<double>();
  r.baseline_mean_cost = j.at("baseline_mean_cost").get<double>();
  r.cost_ratio = j.at("cost_ratio").get<double>();
  r.trials = j.at("trials").get<int>();
  r.failures = j.at("failures").get<int>();
  r.aborted = j.at("aborted").get<int>();
  return r;
}

namespace detail {

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const std::vector<IterationRecord>& records,
                                 int n, int m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "j,t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",u" << i;
  for (int i = 1; i <= n; ++i) out << ",w" << i;
  out << ",flag\n";
  out.precision(17);
  for (const auto& rec : records) {
    if (rec.warm_start) continue;
    for (size_t t = 0; t < rec.states.size(); ++t) {
      out << rec.j << "," << t;
      for (int i = 0; i < n; ++i) out << "," << rec.states[t][i];
      const bool has_input = t < rec.inputs.size();
      for (int i = 0; i < m; ++i) {
        out << ",";
        if (has_input) out << rec.inputs[t][i];
      }
      for (int i = 0; i < n; ++i) {
        out << ",";
        if (has_input) out << rec.disturbances[t][i];
      }
      out << "," << (rec.flags[t] ? 1 : 0) << "\n";
    }
  }
}

}  // namespace detail

/// Persists a completed run: resolved scenario, state summary, one JSON
/// file per iteration and estimate, certificate and the trajectory CSV.
inline void write_run_directory(const Scenario& scenario, const RunResult& run,
                                const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  detail::write_json_file(dir / "scenario.json", scenario_to_json(scenario));

  json summary;
  summary["name"] = scenario.name;
  summary["mode"] = run.state.mode == CertificateMode::probabilistic
                        ? "prob"
                        : "robust";
  summary["final_iteration"] = run.state.j;
  summary["aborted"] = run.state.aborted;
  summary["abort_reason"] = run.state.abort_reason;
  summary["certificate"] = certificate_to_json(run.state.certificate);
  summary["estimate"] = estimate_to_json(run.state.estimate);
  summary["terminal_set"] = polytope_to_json(run.state.terminal);
  summary["P_terminal"] = matrix_to_json(run.P_terminal);
  summary["iterations"] = static_cast<int>(run.iterations.size());
  int warm = 0;
  for (const auto& rec : run.records)
    if (rec.warm_start) ++warm;
  summary["warm_start_records"] = warm;
  detail::write_json_file(dir / "run.json", summary);
  detail::write_json_file(dir / "certificate.json",
                          certificate_to_json(run.state.certificate));

  int warm_idx = 0;
  for (const auto& rec : run.records) {
    if (rec.warm_start) {
      detail::write_json_file(
          dir / ("warmstart_" + std::to_string(warm_idx++) + ".json"),
          record_to_json(rec));
    } else {
      detail::write_json_file(dir / ("iter_" + std::to_string(rec.j) + ".json"),
                              record_to_json(rec));
    }
  }
  for (const auto& info : run.iterations) {
    json est = estimate_to_json(info.estimate);
    est["estimate_changed"] = info.estimate_changed;
    est["scalings"] = info.scalings;
    // Generating-data fingerprint: how much data stood behind this set.
    int states = 0, violations = 0;
    for (const auto& rec : run.records) {
      if (!rec.warm_start && rec.j >= info.j) continue;
      states += static_cast<int>(rec.states.size());
      for (bool f : rec.flags) violations += f ? 0 : 1;
    }
    est["data_fingerprint"] = {{"states", states}, {"violations", violations}};
    detail::write_json_file(dir / ("estimate_" + std::to_string(info.j) + ".json"),
                            est);
    if (info.model) {
      detail::write_json_file(
          dir / ("svm_model_" + std::to_string(info.j) + ".json"),
          svm_model_to_json(*info.model));
    }
  }
  detail::write_trajectory_csv(dir / "trajectory.csv", run.records,
                               scenario.task.state_dim(),
                               scenario.task.input_dim());
}

/// One table row per run directory: epsilon, j_bar, eps_hat, cost ratio.
/// Requires `validate` to have produced validation.json in each.
inline std::string table_csv(const std::vector<std::string>& run_dirs) {
  std::ostringstream out;
  out << "epsilon,j_bar,eps_hat,cost_ratio\n";
  for (const auto& dir : run_dirs) {
    const std::filesystem::path p(dir);
    std::ifstream run_in(p / "run.json");
    std::ifstream val_in(p / "validation.json");
    if (!run_in) throw ConfigError("table: missing run.json in '" + dir + "'");
    if (!val_in)
      throw ConfigError("table: missing validation.json in '" + dir +
                        "' (run `validate` first)");
    json run_j, val_j;
    run_in >> run_j;
    val_in >> val_j;
    const Certificate cert = certificate_from_json(run_j.at("certificate"));
    const ValidationReport rep = validation_from_json(val_j);
    out << cert.epsilon << ",";
    if (cert.j_bar)
      out << *cert.j_bar;
    else
      out << "";
    out << "," << rep.eps_hat << "," << rep.cost_ratio << "\n";
  }
  return out.str();
}

/// Vertex CSV of the per-iteration estimates plus the true and known
/// sets, for external plotting. Two-dimensional tasks only.
inline std::string plotdata_csv(const std::filesystem::path& run_dir) {
  std::ifstream run_in(run_dir / "run.json");
  std::ifstream scn_in(run_dir / "scenario.json");
  if (!run_in || !scn_in)
    throw ConfigError("plotdata: '" + run_dir.string() +
                      "' is not a run directory");
  json run_j, scn_j;
  run_in >> run_j;
  scn_in >> scn_j;
  const Scenario scenario = scenario_from_json(scn_j);
  if (scenario.task.state_dim() != 2)
    throw UnsupportedDimensionError("plotdata: requires a 2-D state space");

  std::ostringstream out;
  out << "set,j,vertex,x1,x2\n";
  out.precision(17);
  auto emit = [&out](const std::string& name, int j, const Polytope& P) {
    const auto verts = vertices_2d(P);
    for (size_t k = 0; k < verts.size(); ++k)
      out << name << "," << j << "," << k << "," << verts[k].x() << ","
          << verts[k].y() << "\n";
  };
  emit("true", 0, scenario.task.Z_true_state);
  emit("known", 0, scenario.task.Z_known_state);
  const int iterations = run_j.at("iterations").get<int>();
  int j_index = 0;
  for (int count = 0; count < iterations; ++count) {
    // Estimate files are keyed by iteration number; scan forward.
    ++j_index;
    std::filesystem::path f;
    while (true) {
      f = run_dir / ("estimate_" + std::to_string(j_index) + ".json");
      if (std::filesystem::exists(f)) break;
      ++j_index;
      if (j_index > 100000)
        throw ConfigError("plotdata: estimate files missing");
    }
    std::ifstream est_in(f);
    json est_j;
    est_in >> est_j;
    emit("estimate", j_index, estimate_from_json(est_j).state_set);
  }
  return out.str();
}

}  // namespace iclmpc
