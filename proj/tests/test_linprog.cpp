#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <random>

#include <Eigen/Dense>

#include "iclmpc/linprog.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace iclmpc;

namespace {
VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("maximize over a box lands on the correct vertex") {
  MatrixXd A(4, 2);
  A << 1, 0, -1, 0, 0, 1, 0, -1;
  VectorXd b(4);
  b << 2, 1, 3, 0.5;  // -1 <= x <= 2, -0.5 <= y <= 3
  auto r = solve_lp(vec2(1.0, 1.0), A, b);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.objective == Catch::Approx(5.0).margin(1e-9));
  CHECK(r.x[0] == Catch::Approx(2.0).margin(1e-9));
  CHECK(r.x[1] == Catch::Approx(3.0).margin(1e-9));

  auto r2 = solve_lp(vec2(-2.0, 1.0), A, b);
  REQUIRE(r2.status == LpStatus::optimal);
  CHECK(r2.objective == Catch::Approx(2.0 + 3.0).margin(1e-9));
}

TEST_CASE("infeasible system is detected") {
  MatrixXd A(2, 1);
  A << 1, -1;
  VectorXd b(2);
  b << -1, -1;  // x <= -1 and x >= 1
  auto r = solve_lp(VectorXd::Ones(1), A, b);
  CHECK(r.status == LpStatus::infeasible);
  CHECK_FALSE(lp_feasible_point(A, b).has_value());
}

TEST_CASE("unbounded direction is detected") {
  MatrixXd A(1, 2);
  A << -1, 0;  // x >= -1, y free
  VectorXd b(1);
  b << 1;
  auto r = solve_lp(vec2(0.0, 1.0), A, b);
  CHECK(r.status == LpStatus::unbounded);
}

TEST_CASE("equality constraints are honored") {
  // max x1 s.t. x1 + x2 = 1, x1 - x2 <= 0.2  ->  x1 = 0.6
  MatrixXd A_ub(1, 2);
  A_ub << 1, -1;
  VectorXd b_ub(1);
  b_ub << 0.2;
  MatrixXd A_eq(1, 2);
  A_eq << 1, 1;
  VectorXd b_eq(1);
  b_eq << 1;
  auto r = solve_lp(vec2(1.0, 0.0), A_ub, b_ub, A_eq, b_eq);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(0.6).margin(1e-9));
  CHECK(r.x[1] == Catch::Approx(0.4).margin(1e-9));
}

TEST_CASE("redundant rows do not break the solve") {
  MatrixXd A(6, 2);
  A << 1, 0, 1, 0, -1, 0, 0, 1, 0, -1, 1, 1;
  VectorXd b(6);
  b << 1, 1, 1, 1, 1, 5;  // duplicated row and a slack diagonal row
  auto r = solve_lp(vec2(1.0, 1.0), A, b);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.objective == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("feasibility point satisfies the system") {
  MatrixXd A(3, 2);
  A << 1, 1, -1, 0, 0, -1;
  VectorXd b(3);
  b << 1, 0, 0;  // simplex
  auto x = lp_feasible_point(A, b);
  REQUIRE(x.has_value());
  CHECK(((A * *x - b).array() <= 1e-9).all());
}

TEST_CASE("negative right-hand sides route through phase 1") {
  // x >= 3 (written as -x <= -3), x <= 5; max -x -> x = 3.
  MatrixXd A(2, 1);
  A << -1, 1;
  VectorXd b(2);
  b << -3, 5;
  auto r = solve_lp(-VectorXd::Ones(1), A, b);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(3.0).margin(1e-9));
}

TEST_CASE("random LPs agree with brute-force vertex enumeration") {
  // Bounded 2-D systems: optimum must match the best feasible vertex of
  // the arrangement.
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 6;
    MatrixXd A(m + 4, 2);
    VectorXd b(m + 4);
    for (int i = 0; i < m; ++i) {
      A(i, 0) = u(gen);
      A(i, 1) = u(gen);
      if (A.row(i).norm() < 1e-3) A(i, 0) += 1.0;
      b[i] = u(gen) + 1.5;  // keeps the origin feasible
    }
    A.block(m, 0, 4, 2) << 1, 0, -1, 0, 0, 1, 0, -1;
    b.segment(m, 4).setConstant(10.0);  // bounding box
    VectorXd c = vec2(u(gen), u(gen));

    auto r = solve_lp(c, A, b);
    REQUIRE(r.status == LpStatus::optimal);

    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < A.rows(); ++i) {
      for (int j = i + 1; j < A.rows(); ++j) {
        Eigen::Matrix2d M;
        M.row(0) = A.row(i);
        M.row(1) = A.row(j);
        if (std::abs(M.determinant()) < 1e-9) continue;
        Eigen::Vector2d v = M.inverse() * Eigen::Vector2d(b[i], b[j]);
        if (((A * v - b).array() <= 1e-7).all())
          best = std::max(best, c.dot(v));
      }
    }
    CHECK(r.objective == Catch::Approx(best).margin(1e-6));
  }
}
