#pragma once

// Shared task fixtures: the double-integrator tracking task with a
// partially known constraint set (box known, diagonal wedge unknown)
// used across the suites.

#include <Eigen/Dense>

#include "iclmpc/geometry.hpp"
#include "iclmpc/rmpc.hpp"
#include "iclmpc/system.hpp"

namespace iclmpc::testing {

inline Eigen::VectorXd v2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

// Known rows: |x_i| <= 20. Unknown rows: x1 + x2 <= 5, x1 - x2 <= 5.
inline Polytope known_box() { return Polytope::cube(2, 20.0); }

inline Polytope true_state_set() {
  Eigen::MatrixXd H(6, 2);
  H << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1, 1, -1;
  Eigen::VectorXd h(6);
  h << 20, 20, 20, 20, 5, 5;
  return Polytope(H, h);
}

inline LtiTask make_tracking_task() {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 1, 1, 0, 1;
  B << 0, 1;
  Eigen::MatrixXd Q = 10.0 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd R = 2.0 * Eigen::MatrixXd::Identity(1, 1);
  Eigen::MatrixXd K = lqr_gain(A, B, Q, R);
  return LtiTask{
      A,
      B,
      Polytope::box(v2(-0.5, -0.5), v2(0.5, 0.5)),
      true_state_set(),
      known_box(),
      Polytope::cube(1, 30.0),
      v2(-15, 15),
      v2(5, 0),
      10,  // T
      4,   // N
      Q,
      R,
      K};
}

// Same task with the disturbance support collapsed to the origin.
inline LtiTask make_nominal_task() {
  LtiTask t = make_tracking_task();
  t.W = Polytope::box(v2(0, 0), v2(0, 0));
  return t;
}

}  // namespace iclmpc::testing
