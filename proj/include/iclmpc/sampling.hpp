#pragma once

#include <utility>

#include <Eigen/Dense>

#include "iclmpc/errors.hpp"
#include "iclmpc/geometry.hpp"
#include "iclmpc/rng.hpp"

namespace iclmpc {

/// Tight axis-aligned bounding box of a bounded polytope. Cheap for
/// boxes, one support LP per face otherwise.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> bounding_box(
    const Polytope& P) {
  if (auto bb = box_bounds(P)) return *bb;
  const int n = P.dim();
  Eigen::VectorXd lo(n), hi(n);
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    dir[i] = 1.0;
    hi[i] = support(P, dir);
    dir[i] = -1.0;
    lo[i] = -support(P, dir);
    dir[i] = 0.0;
  }
  return {lo, hi};
}

/// Uniform sample on a bounded polytope by rejection from its bounding
/// box. Exact (no rejection) when P is itself a box.
inline Eigen::VectorXd sample_uniform(const Polytope& P, RngStream& rng,
                                      const Eigen::VectorXd& lo,
                                      const Eigen::VectorXd& hi) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Eigen::VectorXd x = rng.uniform_box(lo, hi);
    if (contains(P, x, 0.0)) return x;
  }
  throw ConvergenceError("sample_uniform: rejection sampling cap exceeded");
}

inline Eigen::VectorXd sample_uniform(const Polytope& P, RngStream& rng) {
  auto [lo, hi] = bounding_box(P);
  return sample_uniform(P, rng, lo, hi);
}

}  // namespace iclmpc
