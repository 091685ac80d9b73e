#pragma once

// Soft-margin RBF SVM trained through the same QP backend the controller
// uses, plus the polyhedral inner approximation of its feasible region:
// the convex hull of sampled points the classifier accepts, intersected
// with the known constraint box through the sampling domain.
//
// Sign convention: decide(x) <= 0 means classified feasible, so the
// origin (feasible by assumption) must come out nonpositive. Stored
// labels keep +1 = feasible, -1 = infeasible; the decision sum therefore
// enters with the label negated, which puts the +1 margin on the
// infeasible side.

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "iclmpc/errors.hpp"
#include "iclmpc/geometry.hpp"
#include "iclmpc/qp.hpp"
#include "iclmpc/rng.hpp"
#include "iclmpc/sampling.hpp"

namespace iclmpc {

struct SvmConfig {
  double gamma = 0.05;  // RBF width, k(x,y) = exp(-gamma ||x-y||^2)
  double C = 100.0;
  double feasible_weight = 1.0;    // per-class box scaling, default off
  double infeasible_weight = 1.0;
  QpSettings qp;
};

struct SvmModel {
  std::vector<Eigen::VectorXd> support_points;
  std::vector<int> labels;  // +1 feasible, -1 infeasible
  Eigen::VectorXd alphas;   // dual weights of the support points
  double bias = 0.0;
  double gamma = 0.0;
  double C = 0.0;
  double sign = 1.0;  // global flip applied if the origin came out positive

  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return std::exp(-gamma * (a - b).squaredNorm());
  }

  /// Decision value; nonpositive on the classified-feasible side.
  double decide(const Eigen::VectorXd& x) const {
    double g = bias;
    for (size_t i = 0; i < support_points.size(); ++i)
      g += alphas[i] * (-labels[i]) * kernel(support_points[i], x);
    return sign * g;
  }
};

/// Trains the soft-margin dual on labeled states. Labels are +1
/// (feasible) / -1 (infeasible); both classes must be present.
inline SvmModel svm_train(const PointCloud& points,
                          const std::vector<int>& labels,
                          const SvmConfig& cfg) {
  const int np = points.size();
  if (np == 0 || static_cast<int>(labels.size()) != np)
    throw InvalidArgumentError("svm_train: points/labels size mismatch");
  if (cfg.gamma <= 0.0 || cfg.C <= 0.0)
    throw InvalidArgumentError("svm_train: gamma and C must be positive");
  int n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l == 1) {
      ++n_pos;
    } else if (l == -1) {
      ++n_neg;
    } else {
      throw InvalidArgumentError("svm_train: labels must be +1 or -1");
    }
  }
  if (n_pos == 0 || n_neg == 0)
    throw SingleClassError(
        "svm_train: single-class data; keep the previous constraint estimate");

  // Dual in the internal orientation y = -label (+1 on the infeasible
  // class so the decision value is positive there).
  Eigen::VectorXd y(np), box(np);
  for (int i = 0; i < np; ++i) {
    y[i] = -static_cast<double>(labels[i]);
    box[i] = cfg.C * (labels[i] == 1 ? cfg.feasible_weight
                                     : cfg.infeasible_weight);
  }
  Eigen::MatrixXd Kmat(np, np);
  for (int i = 0; i < np; ++i) {
    Kmat(i, i) = 1.0;
    for (int j = i + 1; j < np; ++j) {
      const double k = std::exp(
          -cfg.gamma * (points.points[i] - points.points[j]).squaredNorm());
      Kmat(i, j) = k;
      Kmat(j, i) = k;
    }
  }
  Eigen::MatrixXd Pd = y.asDiagonal() * Kmat * y.asDiagonal();
  Pd.diagonal().array() += 1e-10;  // kernel-matrix jitter

  QpProblem prob;
  prob.P = Pd.sparseView();
  prob.q = -Eigen::VectorXd::Ones(np);
  Eigen::MatrixXd A(np + 1, np);
  A.topRows(np) = Eigen::MatrixXd::Identity(np, np);
  A.row(np) = y.transpose();
  prob.A = A.sparseView();
  prob.l = Eigen::VectorXd::Zero(np + 1);
  prob.u = Eigen::VectorXd::Zero(np + 1);
  prob.u.head(np) = box;
  QpResult res = solve_qp(std::move(prob), cfg.qp);
  if (res.report.status != QpStatus::optimal)
    throw ConvergenceError("svm_train: dual QP did not reach KKT tolerance");

  Eigen::VectorXd alpha =
      res.x.cwiseMax(Eigen::VectorXd::Zero(np)).cwiseMin(box);

  // Bias from the margin support vectors; KKT interval midpoint if the
  // box is active everywhere.
  Eigen::VectorXd g0 = Eigen::VectorXd::Zero(np);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < np; ++j) g0[i] += alpha[j] * y[j] * Kmat(i, j);
  const double tol_free = 1e-6 * cfg.C;
  double bias_sum = 0.0;
  int n_free = 0;
  for (int i = 0; i < np; ++i) {
    if (alpha[i] > tol_free && alpha[i] < box[i] - tol_free) {
      bias_sum += y[i] - g0[i];
      ++n_free;
    }
  }
  double bias;
  if (n_free > 0) {
    bias = bias_sum / n_free;
  } else {
    double lo = -1e300, hi = 1e300;
    for (int i = 0; i < np; ++i) {
      // y_i (g0_i + b) >= 1 at alpha = 0, <= 1 at alpha = box.
      const double at_margin = y[i] * (1.0 - y[i] * g0[i]);
      if (alpha[i] <= tol_free) {
        if (y[i] > 0) lo = std::max(lo, at_margin);
        else hi = std::min(hi, at_margin);
      } else {
        if (y[i] > 0) hi = std::min(hi, at_margin);
        else lo = std::max(lo, at_margin);
      }
    }
    bias = (lo <= hi) ? 0.5 * (lo + hi) : 0.0;
  }

  SvmModel model;
  model.gamma = cfg.gamma;
  model.C = cfg.C;
  model.bias = bias;
  const double tol_sv = 1e-8 * cfg.C;
  for (int i = 0; i < np; ++i) {
    if (alpha[i] > tol_sv) {
      model.support_points.push_back(points.points[i]);
      model.labels.push_back(labels[i]);
    }
  }
  model.alphas.resize(static_cast<int>(model.support_points.size()));
  int k = 0;
  for (int i = 0; i < np; ++i)
    if (alpha[i] > tol_sv) model.alphas[k++] = alpha[i];

  const Eigen::VectorXd origin =
      Eigen::VectorXd::Zero(points.points.front().size());
  if (model.decide(origin) > 0.0) model.sign = -1.0;
  return model;
}

/// Polyhedral inner approximation of the classified-feasible region:
/// hull of the accepted samples drawn uniformly over the known set, with
/// the origin always included. Contained in `known` by construction.
inline Polytope svm_inner_polytope(const SvmModel& model, const Polytope& known,
                                   int n_samples, RngStream& rng) {
  const int d = known.dim();
  if (n_samples < d + 1)
    throw InvalidArgumentError("svm_inner_polytope: too few samples");
  auto [lo, hi] = bounding_box(known);
  PointCloud kept;
  for (int s = 0; s < n_samples; ++s) {
    const Eigen::VectorXd x = rng.uniform_box(lo, hi);
    if (!contains(known, x, 0.0)) continue;
    if (model.decide(x) <= 0.0) kept.add(x);
  }
  kept.add(Eigen::VectorXd::Zero(d));
  if (kept.size() < d + 1)
    throw DegenerateCloudError("svm_inner_polytope: too few accepted samples",
                               kept.size());
  return convex_hull(kept);
}

}  // namespace iclmpc
