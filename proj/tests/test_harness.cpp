#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>

#include "iclmpc/harness.hpp"
#include "task_fixtures.hpp"

using Eigen::VectorXd;
using namespace iclmpc;
using iclmpc::testing::make_tracking_task;
using iclmpc::testing::v2;

namespace {

json sec5_json() {
  std::ifstream in(std::string(SCENARIO_DIR) + "/sec5.json");
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("iclmpc_test_" + tag);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("the shipped scenario loads into a valid task") {
  const Scenario s = scenario_from_json(sec5_json());
  CHECK(s.name == "sec5");
  CHECK(s.task.T == 10);
  CHECK(s.task.N == 4);
  CHECK(s.task.state_dim() == 2);
  CHECK(s.task.Z_true_state.num_rows() == 6);
  CHECK(s.task.Z_known_state.num_rows() == 4);
  CHECK(s.monte_carlo_trials == 100);
  // The derived feedback gain matches the LQR gain of the stage weights.
  const Eigen::MatrixXd K =
      lqr_gain(s.task.A, s.task.B, s.task.Q_stage, s.task.R_stage);
  CHECK((K - s.task.K).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("scenario validation rejects malformed documents") {
  json j = sec5_json();
  j.erase("system");
  CHECK_THROWS_AS(scenario_from_json(j), ConfigError);

  json wrong_version = sec5_json();
  wrong_version["version"] = 7;
  CHECK_THROWS_AS(scenario_from_json(wrong_version), ConfigError);

  json bad_horizon = sec5_json();
  bad_horizon["horizon"] = 10;  // N >= T
  CHECK_THROWS_AS(scenario_from_json(bad_horizon), ConfigError);

  json bad_eps = sec5_json();
  bad_eps["epsilon"] = 1.5;
  CHECK_THROWS_AS(scenario_from_json(bad_eps), ConfigError);

  json bad_mode = sec5_json();
  bad_mode["mode"] = "sometimes";
  CHECK_THROWS_AS(scenario_from_json(bad_mode), ConfigError);
}

TEST_CASE("scenario survives a serialization round trip") {
  const Scenario s = scenario_from_json(sec5_json());
  const Scenario s2 = scenario_from_json(scenario_to_json(s));
  CHECK((s.task.A - s2.task.A).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((s.task.Z_true_state.h() - s2.task.Z_true_state.h())
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(s.icl.epsilon == s2.icl.epsilon);
  CHECK(s.icl.master_seed == s2.icl.master_seed);
  CHECK(s.icl.svm.gamma == s2.icl.svm.gamma);
}

TEST_CASE("artifact JSON round trips preserve content") {
  // One record with an abort, one estimate, one certificate, one model.
  IterationRecord rec;
  rec.j = 4;
  rec.states = {v2(1, 2), v2(3, 4)};
  rec.inputs = {Eigen::VectorXd::Constant(1, -7.5)};
  rec.disturbances = {v2(0.1, -0.2)};
  rec.flags = {true, false};
  rec.success = false;
  rec.cost = 123.5;
  rec.aborted_at = 1;
  const IterationRecord rec2 = record_from_json(record_to_json(rec));
  CHECK(rec2.j == 4);
  CHECK(rec2.aborted_at == 1);
  CHECK(rec2.flags == rec.flags);
  CHECK((rec2.states[1] - rec.states[1]).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(rec2.cost == rec.cost);

  const LtiTask task = make_tracking_task();
  const ConstraintEstimate est = init_estimate(task);
  const ConstraintEstimate est2 = estimate_from_json(estimate_to_json(est));
  CHECK(est2.method == EstimateMethod::known_only);
  CHECK((est2.state_set.H() - est.state_set.H()).lpNorm<Eigen::Infinity>() ==
        0.0);

  Certificate cert = make_certificate(CertificateMode::probabilistic, 0.3, 0.01);
  cert.accrued = 5;
  cert.j_bar = 9;
  const Certificate cert2 = certificate_from_json(certificate_to_json(cert));
  CHECK(cert2.required == 13);
  CHECK(cert2.accrued == 5);
  CHECK(cert2.j_bar == 9);

  SvmModel m;
  m.support_points = {v2(1, 1), v2(-1, 0)};
  m.labels = {1, -1};
  m.alphas = Eigen::VectorXd::Constant(2, 3.5);
  m.bias = -0.25;
  m.gamma = 0.05;
  m.C = 100.0;
  const SvmModel m2 = svm_model_from_json(svm_model_to_json(m));
  CHECK(m2.labels == m.labels);
  CHECK(m2.bias == m.bias);
  CHECK(m2.gamma == m.gamma);
  const VectorXd probe = v2(0.3, -0.4);
  CHECK(m2.decide(probe) == m.decide(probe));
}

TEST_CASE("validation with the true set is the baseline itself") {
  const LtiTask task = make_tracking_task();
  const ControlModel model = control_model(task);
  const Eigen::MatrixXd P = terminal_cost(model);
  const Polytope term = terminal_set(model, task.Z_true_state, task.T - task.N);
  ConstraintEstimate truth{task.Z_true_state, task.U,
                           EstimateMethod::known_only, 1};
  const ValidationReport rep =
      monte_carlo_validate(task, truth, term, P, 20, 9001, 1);
  CHECK(rep.trials == 20);
  CHECK(rep.eps_hat == 0.0);
  CHECK(rep.failures == 0);
  CHECK(rep.aborted == 0);
  CHECK(rep.cost_ratio == Catch::Approx(1.0).margin(1e-12));
  CHECK(performance_loss(rep) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("performance loss obeys the ratio identity") {
  ValidationReport r;
  r.mean_cost = 970.0;
  r.baseline_mean_cost = 1000.0;
  r.cost_ratio = r.mean_cost / r.baseline_mean_cost;
  CHECK(performance_loss(r) ==
        Catch::Approx((r.cost_ratio - 1.0) * r.baseline_mean_cost).margin(1e-9));
}

TEST_CASE("validation reports are reproducible") {
  const LtiTask task = make_tracking_task();
  const ControlModel model = control_model(task);
  const Eigen::MatrixXd P = terminal_cost(model);
  const Polytope term = terminal_set(model, task.Z_true_state, task.T - task.N);
  ConstraintEstimate est{task.Z_known_state, task.U, EstimateMethod::known_only,
                         1};
  const Polytope term_est =
      terminal_set(model, est.state_set, task.T - task.N);
  const ValidationReport a =
      monte_carlo_validate(task, est, term_est, P, 10, 5555, 1);
  const ValidationReport b =
      monte_carlo_validate(task, est, term_est, P, 10, 5555, 1);
  CHECK(a.eps_hat == b.eps_hat);
  CHECK(a.mean_cost == b.mean_cost);
  CHECK(a.baseline_mean_cost == b.baseline_mean_cost);
}

TEST_CASE("run directory contains the documented artifact set") {
  const Scenario base = scenario_from_json(sec5_json());
  Scenario s = base;
  s.icl.epsilon = 0.5;
  s.icl.beta = 0.5;  // one success suffices; keeps the test quick
  s.icl.master_seed = 4;
  const RunResult res = run(s.task, s.icl);
  REQUIRE(res.state.certificate.closed());

  const auto dir = temp_dir("rundir");
  write_run_directory(s, res, dir);
  namespace fs = std::filesystem;
  CHECK(fs::exists(dir / "scenario.json"));
  CHECK(fs::exists(dir / "run.json"));
  CHECK(fs::exists(dir / "certificate.json"));
  CHECK(fs::exists(dir / "trajectory.csv"));
  CHECK(fs::exists(dir / "warmstart_0.json"));
  CHECK(fs::exists(dir / "warmstart_1.json"));
  CHECK(fs::exists(dir / "iter_1.json"));
  CHECK(fs::exists(dir / ("estimate_" + std::to_string(res.state.j) + ".json")));

  // The stored scenario reloads and the stored record parses.
  std::ifstream scn(dir / "scenario.json");
  json scn_j;
  scn >> scn_j;
  CHECK_NOTHROW(scenario_from_json(scn_j));
  std::ifstream it1(dir / "iter_1.json");
  json it1_j;
  it1 >> it1_j;
  const IterationRecord rec = record_from_json(it1_j);
  CHECK(rec.j == 1);
  CHECK(static_cast<int>(rec.states.size()) == s.task.T + 1);

  // trajectory.csv has a header plus (T+1) lines per completed iteration.
  std::ifstream csv(dir / "trajectory.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "j,t,x1,x2,u1,w1,w2,flag");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  int expected = 0;
  for (const auto& r : res.records)
    if (!r.warm_start) expected += static_cast<int>(r.states.size());
  CHECK(rows == expected);

  // plotdata emits the reference sets and one block per iteration.
  const std::string plot = plotdata_csv(dir);
  CHECK(plot.find("true,0,0,") != std::string::npos);
  CHECK(plot.find("known,0,0,") != std::string::npos);
  CHECK(plot.find("estimate,") != std::string::npos);

  // table requires validation.json first, then emits one row.
  CHECK_THROWS_AS(table_csv({dir.string()}), ConfigError);
  const ValidationReport rep = monte_carlo_validate(
      s.task, res.state.estimate, res.state.terminal, res.P_terminal, 5, 77, 1);
  detail::write_json_file(dir / "validation.json", validation_to_json(rep));
  const std::string table = table_csv({dir.string()});
  CHECK(table.find("epsilon,j_bar,eps_hat,cost_ratio") == 0);
  CHECK(table.find("0.5,") != std::string::npos);
  std::filesystem::remove_all(dir);
}
