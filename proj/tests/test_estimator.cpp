#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include <Eigen/Dense>

#include "iclmpc/estimator.hpp"
#include "task_fixtures.hpp"

using Eigen::VectorXd;
using namespace iclmpc;
using iclmpc::testing::make_tracking_task;
using iclmpc::testing::v2;

namespace {

// Hand-built record with given states; flags from the oracle.
IterationRecord make_record(const LtiTask& task,
                            const std::vector<VectorXd>& states, int j) {
  IterationRecord rec;
  rec.j = j;
  rec.states = states;
  rec.flags = classify_trajectory(task, states);
  bool ok = true;
  for (bool f : rec.flags) ok = ok && f;
  rec.success = ok;
  return rec;
}

}  // namespace

TEST_CASE("required_successes sample bound") {
  CHECK(required_successes(0.5, 0.5) == 1);
  CHECK(required_successes(0.3, 0.01) == 13);
  CHECK(required_successes(0.5, 0.05) == 5);
  CHECK(required_successes(0.5, 0.01) == 7);
  CHECK_THROWS_AS(required_successes(0.0, 0.5), InvalidArgumentError);
  CHECK_THROWS_AS(required_successes(1.0, 0.5), InvalidArgumentError);
  CHECK_THROWS_AS(required_successes(0.5, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(required_successes(0.5, 1.0), InvalidArgumentError);
}

TEST_CASE("required_successes is monotone on a grid") {
  // Fewer successes suffice when either tolerance loosens.
  for (double beta : {0.01, 0.05, 0.2}) {
    int prev = 1 << 30;
    for (double eps : {0.1, 0.2, 0.3, 0.5, 0.7}) {
      const int n = required_successes(eps, beta);
      CHECK(n <= prev);
      prev = n;
    }
  }
  for (double eps : {0.1, 0.3, 0.5}) {
    int prev = 1 << 30;
    for (double beta : {0.001, 0.01, 0.1, 0.3}) {
      const int n = required_successes(eps, beta);
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("init_estimate is the known set and nothing else") {
  const LtiTask task = make_tracking_task();
  const ConstraintEstimate est = init_estimate(task);
  CHECK(est.method == EstimateMethod::known_only);
  CHECK(est.source_iteration == 1);
  CHECK((est.state_set.H() - task.Z_known_state.H()).lpNorm<Eigen::Infinity>() ==
        0.0);
  CHECK((est.input_set.H() - task.U.H()).lpNorm<Eigen::Infinity>() == 0.0);

  // Fully known constraints: the estimate equals the true set.
  LtiTask full = make_tracking_task();
  full.Z_known_state = full.Z_true_state;
  const ConstraintEstimate est2 = init_estimate(full);
  CHECK((est2.state_set.H() - full.Z_true_state.H()).lpNorm<Eigen::Infinity>() ==
        0.0);
}

TEST_CASE("certificate counter: increments, resets, closure") {
  Certificate c = make_certificate(CertificateMode::probabilistic, 0.5, 0.05);
  REQUIRE(c.required == 5);

  // (l = N_it - 1, success, unchanged) closes the certificate.
  c.accrued = 4;
  Certificate closed = record_outcome(c, true, false, 7);
  CHECK(closed.closed());
  CHECK(closed.j_bar == 7);

  // An estimate change resets the streak.
  c.accrued = 7;
  Certificate reset = record_outcome(c, true, true, 9);
  CHECK(reset.accrued == 0);
  CHECK_FALSE(reset.closed());

  // Failure keeps the certificate open at zero.
  c.accrued = 0;
  Certificate fail = record_outcome(c, false, false, 2);
  CHECK(fail.accrued == 0);
  CHECK_FALSE(fail.closed());

  // Robust-mode certificates do not run the counter.
  Certificate rob = make_certificate(CertificateMode::robust, 0.0, 0.01);
  CHECK_THROWS_AS(record_outcome(rob, true, false, 1), InvalidArgumentError);
}

TEST_CASE("closed certificates ignore further outcomes") {
  Certificate c = make_certificate(CertificateMode::probabilistic, 0.5, 0.5);
  c = record_outcome(c, true, false, 3);
  REQUIRE(c.closed());
  const Certificate after = record_outcome(c, false, true, 9);
  CHECK(after.j_bar == 3);
}

TEST_CASE("cvx_update: hull of feasible states plus the origin") {
  const LtiTask task = make_tracking_task();
  std::vector<IterationRecord> records;
  records.push_back(make_record(
      task, {v2(-15, 15), v2(-6, 4), v2(3, -2), v2(8, 1)}, 1));
  // (8,1) violates x1 - x2 <= 5; it must not enter the hull.
  const ConstraintEstimate est = cvx_update(records, task, 2);
  CHECK(est.method == EstimateMethod::cvx);
  CHECK(contains(est.state_set, v2(0, 0), 1e-9));
  CHECK(contains(est.state_set, v2(-15, 15), 1e-9));
  CHECK_FALSE(contains(est.state_set, v2(8, 1), 1e-6));

  // Soundness: every vertex satisfies all true constraint rows.
  for (const auto& v : vertices_2d(est.state_set))
    CHECK(contains(task.Z_true_state, v2(v.x(), v.y()), 1e-9));
}

TEST_CASE("cvx_update: collinear feasible states plus off-line origin") {
  const LtiTask task = make_tracking_task();
  std::vector<IterationRecord> records;
  records.push_back(
      make_record(task, {v2(-10, 5), v2(-8, 5), v2(-4, 5), v2(-2, 5)}, 1));
  const ConstraintEstimate est = cvx_update(records, task, 2);
  CHECK(est.state_set.num_rows() >= 3);  // full-dimensional triangle or more
}

TEST_CASE("cvx_update: chain monotonicity across iterations") {
  const LtiTask task = make_tracking_task();
  std::vector<IterationRecord> records;
  records.push_back(make_record(task, {v2(-15, 15), v2(-5, 5), v2(0, 1)}, 1));
  const ConstraintEstimate early = cvx_update(records, task, 2);
  records.push_back(make_record(task, {v2(2, 2), v2(-2, -8), v2(4, 0)}, 2));
  const ConstraintEstimate late = cvx_update(records, task, 3);
  for (const auto& v : vertices_2d(early.state_set))
    CHECK(contains(late.state_set, v2(v.x(), v.y()), 1e-9));
}

TEST_CASE("cvx_update degeneracy propagates") {
  const LtiTask task = make_tracking_task();
  std::vector<IterationRecord> records;
  // Only origin-collinear feasible states: affinely degenerate with 0.
  records.push_back(make_record(task, {v2(1, 1), v2(2, 2)}, 1));
  CHECK_THROWS_AS(cvx_update(records, task, 2), DegenerateCloudError);
}

TEST_CASE("svm_update learns a set inside the known box") {
  const LtiTask task = make_tracking_task();
  // Synthetic labeled sweep standing in for warm-start data.
  RngStream data_rng(808);
  std::vector<VectorXd> pts;
  for (int i = 0; i < 120; ++i)
    pts.push_back(v2(data_rng.uniform(-20, 20), data_rng.uniform(-20, 20)));
  std::vector<IterationRecord> records{make_record(task, pts, 1)};
  bool has_violation = false;
  for (bool f : records[0].flags) has_violation |= !f;
  REQUIRE(has_violation);

  SvmConfig cfg;
  cfg.gamma = 0.05;
  cfg.C = 100.0;
  RngStream rng(17);
  const ConstraintEstimate est = svm_update(records, task, cfg, 1000, rng, 2);
  CHECK(est.method == EstimateMethod::svm);
  CHECK(est.source_iteration == 2);
  for (const auto& v : vertices_2d(est.state_set))
    CHECK(contains(task.Z_known_state, v2(v.x(), v.y()), 1e-9));
  // Violations observed near the wedge: the estimate is strictly inside
  // the box there.
  CHECK(support(est.state_set, v2(1, 1)) < 39.0);
}

TEST_CASE("svm_update on all-feasible records raises SingleClassError") {
  const LtiTask task = make_tracking_task();
  std::vector<IterationRecord> records{
      make_record(task, {v2(0, 0), v2(1, 1), v2(-5, 2)}, 1)};
  RngStream rng(3);
  CHECK_THROWS_AS(svm_update(records, task, SvmConfig{}, 1000, rng, 2),
                  SingleClassError);
}

TEST_CASE("default RBF width follows the known-set diameter") {
  const double g = default_rbf_gamma(Polytope::cube(2, 20.0));
  // diameter^2 = 40^2 + 40^2 = 3200.
  CHECK(g == Catch::Approx(2.0 / 3200.0).margin(1e-12));
}

TEST_CASE("scaled_estimate inflates but stays within the known rows") {
  const LtiTask task = make_tracking_task();
  std::vector<IterationRecord> records;
  records.push_back(make_record(task, {v2(-4, 4), v2(3, -3), v2(1, 2)}, 1));
  const ConstraintEstimate est = cvx_update(records, task, 2);
  const ConstraintEstimate big =
      scaled_estimate(est, 1.25, task.Z_known_state, 3);
  // Inflation keeps every previous point and stays inside the known box.
  for (const auto& v : vertices_2d(est.state_set))
    CHECK(contains(big.state_set, v2(v.x(), v.y()), 1e-9));
  for (const auto& v : vertices_2d(big.state_set))
    CHECK(contains(task.Z_known_state, v2(v.x(), v.y()), 1e-9));
}
