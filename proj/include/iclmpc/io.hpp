#pragma once

// JSON encoding of every persisted artifact: polytopes, records,
// estimates, certificates, SVM models. Matrices are row-major nested
// arrays; all formats are documented in docs/formats.md.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "iclmpc/errors.hpp"
#include "iclmpc/qp.hpp"
#include "iclmpc/estimator.hpp"
#include "iclmpc/geometry.hpp"
#include "iclmpc/svm.hpp"
#include "iclmpc/system.hpp"

namespace iclmpc {

using nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ConfigError(what + ": expected a nested array matrix");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Eigen::MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols)
      throw ConfigError(what + ": ragged matrix rows");
    for (int c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        throw ConfigError(what + ": non-numeric matrix entry");
      M(r, c) = j[r][c].get<double>();
    }
  }
  return M;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + ": non-numeric entry");
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

inline json polytope_to_json(const Polytope& P) {
  return json{{"H", matrix_to_json(P.H())}, {"h", vector_to_json(P.h())}};
}

inline Polytope polytope_from_json(const json& j, const std::string& what) {
  if (!j.contains("H") || !j.contains("h"))
    throw ConfigError(what + ": polytope needs fields H and h");
  try {
    return Polytope(matrix_from_json(j["H"], what + ".H"),
                    vector_from_json(j["h"], what + ".h"));
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline json record_to_json(const IterationRecord& rec) {
  json out;
  out["j"] = rec.j;
  out["warm_start"] = rec.warm_start;
  json states = json::array(), inputs = json::array(), dist = json::array();
  for (const auto& x : rec.states) states.push_back(vector_to_json(x));
  for (const auto& u : rec.inputs) inputs.push_back(vector_to_json(u));
  for (const auto& w : rec.disturbances) dist.push_back(vector_to_json(w));
  out["states"] = std::move(states);
  out["inputs"] = std::move(inputs);
  out["disturbances"] = std::move(dist);
  out["flags"] = rec.flags;
  out["success"] = rec.success;
  out["cost"] = rec.cost;
  if (rec.aborted_at)
    out["aborted_at"] = *rec.aborted_at;
  else
    out["aborted_at"] = nullptr;
  return out;
}

inline IterationRecord record_from_json(const json& j) {
  IterationRecord rec;
  rec.j = j.at("j").get<int>();
  rec.warm_start = j.value("warm_start", false);
  for (const auto& x : j.at("states"))
    rec.states.push_back(vector_from_json(x, "record.states"));
  for (const auto& u : j.at("inputs"))
    rec.inputs.push_back(vector_from_json(u, "record.inputs"));
  for (const auto& w : j.at("disturbances"))
    rec.disturbances.push_back(vector_from_json(w, "record.disturbances"));
  rec.flags = j.at("flags").get<std::vector<bool>>();
  rec.success = j.at("success").get<bool>();
  rec.cost = j.at("cost").get<double>();
  if (!j.at("aborted_at").is_null()) rec.aborted_at = j["aborted_at"].get<int>();
  return rec;
}

inline json estimate_to_json(const ConstraintEstimate& est) {
  return json{{"state_set", polytope_to_json(est.state_set)},
              {"input_set", polytope_to_json(est.input_set)},
              {"method", to_string(est.method)},
              {"source_iteration", est.source_iteration}};
}

inline EstimateMethod method_from_string(const std::string& s) {
  if (s == "known_only") return EstimateMethod::known_only;
  if (s == "svm") return EstimateMethod::svm;
  if (s == "cvx") return EstimateMethod::cvx;
  throw ConfigError("unknown estimate method '" + s + "'");
}

inline ConstraintEstimate estimate_from_json(const json& j) {
  return ConstraintEstimate{
      polytope_from_json(j.at("state_set"), "estimate.state_set"),
      polytope_from_json(j.at("input_set"), "estimate.input_set"),
      method_from_string(j.at("method").get<std::string>()),
      j.at("source_iteration").get<int>()};
}

inline json certificate_to_json(const Certificate& c) {
  json out;
  out["mode"] = c.mode == CertificateMode::probabilistic ? "prob" : "robust";
  out["epsilon"] = c.epsilon;
  out["beta"] = c.beta;
  out["required_successes"] = c.required;
  out["accrued_successes"] = c.accrued;
  if (c.j_bar)
    out["j_bar"] = *c.j_bar;
  else
    out["j_bar"] = nullptr;
  return out;
}

inline Certificate certificate_from_json(const json& j) {
  Certificate c;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "prob") {
    c.mode = CertificateMode::probabilistic;
  } else if (mode == "robust") {
    c.mode = CertificateMode::robust;
  } else {
    throw ConfigError("certificate: unknown mode '" + mode + "'");
  }
  c.epsilon = j.at("epsilon").get<double>();
  c.beta = j.at("beta").get<double>();
  c.required = j.at("required_successes").get<int>();
  c.accrued = j.at("accrued_successes").get<int>();
  if (!j.at("j_bar").is_null()) c.j_bar = j["j_bar"].get<int>();
  return c;
}

/// Sparse QP dump for external-solver cross-validation: triplet-form
/// matrices, bounds and (optionally) the solution attached by the caller.
inline json qp_problem_to_json(const QpProblem& p) {
  auto sparse_to_json = [](const Eigen::SparseMatrix<double>& M) {
    json rows = json::array(), cols = json::array(), vals = json::array();
    for (int k = 0; k < M.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it) {
        rows.push_back(static_cast<int>(it.row()));
        cols.push_back(static_cast<int>(it.col()));
        vals.push_back(it.value());
      }
    return json{{"shape", {M.rows(), M.cols()}},
                {"rows", std::move(rows)},
                {"cols", std::move(cols)},
                {"values", std::move(vals)}};
  };
  json out;
  out["P"] = sparse_to_json(p.P);
  out["q"] = vector_to_json(p.q);
  out["A"] = sparse_to_json(p.A);
  json l = json::array(), u = json::array();
  for (Eigen::Index i = 0; i < p.l.size(); ++i) {
    if (std::isfinite(p.l[i])) l.push_back(p.l[i]); else l.push_back(nullptr);
    if (std::isfinite(p.u[i])) u.push_back(p.u[i]); else u.push_back(nullptr);
  }
  out["l"] = std::move(l);
  out["u"] = std::move(u);
  return out;
}

inline json svm_model_to_json(const SvmModel& m) {
  json pts = json::array();
  for (const auto& p : m.support_points) pts.push_back(vector_to_json(p));
  return json{{"support_points", std::move(pts)},
              {"labels", m.labels},
              {"alphas", vector_to_json(m.alphas)},
              {"bias", m.bias},
              {"kernel", json{{"type", "rbf"}, {"gamma", m.gamma}}},
              {"C", m.C},
              {"sign", m.sign}};
}

inline SvmModel svm_model_from_json(const json& j) {
  SvmModel m;
  for (const auto& p : j.at("support_points"))
    m.support_points.push_back(vector_from_json(p, "svm.support_points"));
  m.labels = j.at("labels").get<std::vector<int>>();
  m.alphas = vector_from_json(j.at("alphas"), "svm.alphas");
  m.bias = j.at("bias").get<double>();
  m.gamma = j.at("kernel").at("gamma").get<double>();
  m.C = j.at("C").get<double>();
  m.sign = j.value("sign", 1.0);
  return m;
}

}  // namespace iclmpc
