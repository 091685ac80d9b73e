#pragma once

// Constraint-estimate construction and certificate bookkeeping. Estimates
// are built from recorded trajectories and their oracle flags only; the
// soundness of the hull-based path against the true set is a property
// checked in tests, never a runtime query available here.

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "iclmpc/errors.hpp"
#include "iclmpc/geometry.hpp"
#include "iclmpc/svm.hpp"
#include "iclmpc/system.hpp"

namespace iclmpc {

enum class EstimateMethod { known_only, svm, cvx };

inline const char* to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::known_only: return "known_only";
    case EstimateMethod::svm: return "svm";
    case EstimateMethod::cvx: return "cvx";
  }
  return "?";
}

/// The pair (state polytope, input polytope) the controller plans
/// against. Input constraints are known exactly and never estimated.
struct ConstraintEstimate {
  Polytope state_set;
  Polytope input_set;
  EstimateMethod method = EstimateMethod::known_only;
  int source_iteration = 1;  // iteration whose data built this estimate
};

enum class CertificateMode { probabilistic, robust };

/// Safety-certificate state: epsilon/beta targets, the required and
/// accrued consecutive-success counts, and the closing iteration index.
struct Certificate {
  CertificateMode mode = CertificateMode::probabilistic;
  double epsilon = 0.0;
  double beta = 0.0;
  int required = 0;  // successes needed with a frozen estimate
  int accrued = 0;   // consecutive successes so far
  std::optional<int> j_bar;

  bool closed() const { return j_bar.has_value(); }
};

/// Sample bound ceil(ln(1/beta) / ln(1/(1-epsilon))) on the consecutive
/// successful iterations needed before the frozen estimate certifies
/// P(failure) <= epsilon at confidence 1-beta.
inline int required_successes(double epsilon, double beta) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidArgumentError("required_successes: epsilon must be in (0,1)");
  if (!(beta > 0.0 && beta < 1.0))
    throw InvalidArgumentError("required_successes: beta must be in (0,1)");
  const double v = std::log(1.0 / beta) / std::log(1.0 / (1.0 - epsilon));
  const int n = static_cast<int>(std::ceil(v - 1e-9));
  return n < 1 ? 1 : n;
}

inline Certificate make_certificate(CertificateMode mode, double epsilon,
                                    double beta) {
  Certificate c;
  c.mode = mode;
  c.epsilon = mode == CertificateMode::robust ? 0.0 : epsilon;
  c.beta = beta;
  c.required =
      mode == CertificateMode::probabilistic ? required_successes(epsilon, beta) : 0;
  return c;
}

/// First-iteration estimate: only the known constraint rows.
inline ConstraintEstimate init_estimate(const LtiTask& task) {
  return ConstraintEstimate{task.Z_known_state, task.U,
                            EstimateMethod::known_only, 1};
}

/// Success-counter update. Any estimate change resets the streak (the
/// certificate's premise is a set frozen over the whole streak); a
/// completed streak closes the certificate at the frozen estimate's
/// source iteration.
inline Certificate record_outcome(Certificate cert, bool success,
                                  bool estimate_changed,
                                  int frozen_iteration) {
  if (cert.mode != CertificateMode::probabilistic)
    throw InvalidArgumentError("record_outcome: probabilistic mode only");
  if (cert.closed()) return cert;
  cert.accrued = (success && !estimate_changed) ? cert.accrued + 1 : 0;
  if (cert.accrued >= cert.required) cert.j_bar = frozen_iteration;
  return cert;
}

/// All recorded states with their oracle flags, as SVM training data.
inline std::pair<PointCloud, std::vector<int>> training_data(
    const std::vector<IterationRecord>& records) {
  PointCloud cloud;
  std::vector<int> labels;
  for (const auto& rec : records) {
    for (size_t t = 0; t < rec.states.size(); ++t) {
      cloud.add(rec.states[t]);
      labels.push_back(rec.flags[t] ? 1 : -1);
    }
  }
  return {std::move(cloud), std::move(labels)};
}

/// Scale-aware RBF width default: 2 over the squared diameter of the
/// known state set.
inline double default_rbf_gamma(const Polytope& known) {
  auto [lo, hi] = bounding_box(known);
  const double diam2 = (hi - lo).squaredNorm();
  if (diam2 <= 0.0)
    throw InvalidArgumentError("default_rbf_gamma: degenerate known set");
  return 2.0 / diam2;
}

/// Rebuilds the SVM-based estimate from every recorded state. Throws
/// SingleClassError when no violations (or no feasible points) exist yet
/// and DegenerateCloudError when too few samples survive classification;
/// callers keep the previous estimate in both cases.
inline ConstraintEstimate svm_update(const std::vector<IterationRecord>& records,
                                     const LtiTask& task, const SvmConfig& cfg,
                                     int n_samples, RngStream& rng,
                                     int iteration,
                                     SvmModel* model_out = nullptr) {
  auto [cloud, labels] = training_data(records);
  if (cloud.empty()) throw InvalidArgumentError("svm_update: no records");
  SvmModel model = svm_train(cloud, labels, cfg);
  Polytope state_set =
      svm_inner_polytope(model, task.Z_known_state, n_samples, rng);
  if (model_out != nullptr) *model_out = std::move(model);
  return ConstraintEstimate{std::move(state_set), task.U, EstimateMethod::svm,
                            iteration};
}

/// Convex-hull estimate from the oracle-feasible recorded states plus the
/// origin. Sound by construction whenever the flags are sound.
inline ConstraintEstimate cvx_update(const std::vector<IterationRecord>& records,
                                     const LtiTask& task, int iteration) {
  PointCloud feasible;
  for (const auto& rec : records)
    for (size_t t = 0; t < rec.states.size(); ++t)
      if (rec.flags[t]) feasible.add(rec.states[t]);
  feasible.add(Eigen::VectorXd::Zero(task.state_dim()));
  Polytope hull = convex_hull(feasible);
  return ConstraintEstimate{std::move(hull), task.U, EstimateMethod::cvx,
                            iteration};
}

/// Remark-1 style relaxation: inflate the estimated state rows about the
/// origin and re-intersect with the known rows.
inline ConstraintEstimate scaled_estimate(const ConstraintEstimate& est,
                                          double gamma, const Polytope& known,
                                          int iteration) {
  ConstraintEstimate out{intersect(scale(est.state_set, gamma), known),
                         est.input_set, est.method, iteration};
  return out;
}

}  // namespace iclmpc
