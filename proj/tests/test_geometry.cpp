#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "iclmpc/geometry.hpp"
#include "iclmpc/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace iclmpc;

namespace {

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

// Independent hull-membership oracle: x in conv(points) iff the LP
//   find lambda >= 0 with sum(lambda_i p_i) = x, sum(lambda_i) = 1
// is feasible. Exercised against the facet-based hull construction.
bool in_hull_lp(const std::vector<VectorXd>& pts, const VectorXd& x) {
  const int k = static_cast<int>(pts.size());
  const int d = static_cast<int>(x.size());
  MatrixXd A_eq(d + 1, k);
  VectorXd b_eq(d + 1);
  for (int i = 0; i < k; ++i) A_eq.block(0, i, d, 1) = pts[i];
  A_eq.row(d).setOnes();
  b_eq.head(d) = x;
  b_eq[d] = 1.0;
  MatrixXd A_ub = -MatrixXd::Identity(k, k);
  VectorXd b_ub = VectorXd::Zero(k);
  return lp_feasible_point(A_ub, b_ub, A_eq, b_eq).has_value();
}

// Section-V-style sets reused across cases.
Polytope known_box_20() { return Polytope::cube(2, 20.0); }

Polytope wedge_5() {
  MatrixXd H(2, 2);
  H << 1, 1, 1, -1;
  VectorXd h(2);
  h << 5, 5;
  return Polytope(H, h);
}

}  // namespace

TEST_CASE("contains: unit box and task-style sets") {
  Polytope box = Polytope::cube(2, 1.0);
  CHECK(contains(box, vec2(0, 0), 0.0));
  CHECK_FALSE(contains(box, vec2(1.5, 0), 0.0));

  CHECK(contains(known_box_20(), vec2(-15, 15)));
  CHECK_FALSE(contains(wedge_5(), vec2(3, 3)));
  CHECK(contains(wedge_5(), vec2(3, 3), 1.1));  // slack is honored

  CHECK_THROWS_AS(contains(box, VectorXd::Zero(3), 0.0), DimensionError);
}

TEST_CASE("polytope construction rejects malformed input") {
  MatrixXd H = MatrixXd::Zero(2, 2);
  H(0, 0) = 1.0;
  CHECK_THROWS_AS(Polytope(H, VectorXd::Ones(2)), InvalidArgumentError);
  CHECK_THROWS_AS(Polytope(MatrixXd::Identity(2, 2), VectorXd::Ones(3)),
                  DimensionError);
}

TEST_CASE("intersect stacks rows without changing membership") {
  Polytope box = Polytope::cube(2, 1.0);
  Polytope self = intersect(box, box);
  RngStream rng(11);
  for (int i = 0; i < 200; ++i) {
    VectorXd x = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    CHECK(contains(self, x, 0.0) == contains(box, x, 0.0));
  }

  // Disjoint halfspaces intersect to the empty set.
  MatrixXd Ha(1, 1), Hb(1, 1);
  Ha << 1;
  Hb << -1;
  VectorXd ha(1), hb(1);
  ha << -1;  // x <= -1
  hb << -2;  // x >= 2
  CHECK(is_empty(intersect(Polytope(Ha, ha), Polytope(Hb, hb))));

  CHECK_THROWS_AS(intersect(box, Polytope::cube(3, 1.0)), DimensionError);
}

TEST_CASE("intersect: known box with unknown wedge on a grid") {
  Polytope inter = intersect(known_box_20(), wedge_5());
  CHECK(contains(inter, vec2(0, 0)));
  CHECK_FALSE(contains(inter, vec2(6, 0)));
  for (double x = -22; x <= 22; x += 2.0) {
    for (double y = -22; y <= 22; y += 2.0) {
      const VectorXd p = vec2(x, y);
      const bool both =
          contains(known_box_20(), p, 0.0) && contains(wedge_5(), p, 0.0);
      CHECK(contains(inter, p, 0.0) == both);
    }
  }
}

TEST_CASE("convex hull of a simplex and of box corners") {
  PointCloud tri({vec2(0, 0), vec2(1, 0), vec2(0, 1)});
  Polytope Pt = convex_hull(tri);
  CHECK(Pt.num_rows() == 3);
  for (const auto& p : tri.points) CHECK(contains(Pt, p, 1e-9));
  CHECK(contains(Pt, vec2(0.2, 0.2), 0.0));
  CHECK_FALSE(contains(Pt, vec2(0.8, 0.8), 1e-6));

  PointCloud corners({vec2(1, 1), vec2(1, -1), vec2(-1, 1), vec2(-1, -1)});
  Polytope Pb = convex_hull(corners);
  CHECK(Pb.num_rows() == 4);
  RngStream rng(3);
  Polytope box = Polytope::cube(2, 1.0);
  for (int i = 0; i < 300; ++i) {
    VectorXd x = vec2(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    CHECK(contains(Pb, x, 1e-9) == contains(box, x, 1e-9));
  }
}

TEST_CASE("hull membership equals the LP oracle on random 2-D clouds") {
  RngStream rng(17);
  for (int cloud_idx = 0; cloud_idx < 20; ++cloud_idx) {
    std::vector<VectorXd> pts;
    for (int i = 0; i < 50; ++i)
      pts.push_back(vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    Polytope hull = convex_hull(PointCloud(pts));
    int checked = 0;
    for (int i = 0; i < 500 / 20; ++i) {
      VectorXd probe = vec2(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
      const bool via_h = contains(hull, probe, 1e-7);
      const bool via_lp = in_hull_lp(pts, probe);
      if (via_h != via_lp) {
        // Disagreement is only admissible within the membership slack of
        // the facet representation.
        const double margin = (hull.H() * probe - hull.h()).maxCoeff();
        CHECK(std::abs(margin) < 1e-6);
      }
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("hull error paths: degenerate, empty, unsupported dimension") {
  PointCloud line({vec2(0, 0), vec2(1, 1), vec2(2, 2)});
  try {
    convex_hull(line);
    FAIL("expected DegenerateCloudError");
  } catch (const DegenerateCloudError& e) {
    CHECK(e.affine_rank == 1);
  }

  CHECK_THROWS_AS(convex_hull(PointCloud{}), InvalidArgumentError);

  std::vector<VectorXd> five;
  RngStream rng(5);
  for (int i = 0; i < 8; ++i) {
    VectorXd p(5);
    for (int k = 0; k < 5; ++k) p[k] = rng.uniform(-1, 1);
    five.push_back(p);
  }
  CHECK_THROWS_AS(convex_hull(PointCloud(five)), UnsupportedDimensionError);
}

TEST_CASE("hull in 3-D and 4-D matches the LP oracle") {
  RngStream rng(23);
  for (int d = 3; d <= 4; ++d) {
    std::vector<VectorXd> pts;
    for (int i = 0; i < 25; ++i) {
      VectorXd p(d);
      for (int k = 0; k < d; ++k) p[k] = rng.uniform(-1, 1);
      pts.push_back(p);
    }
    Polytope hull = convex_hull(PointCloud(pts));
    for (const auto& p : pts) CHECK(contains(hull, p, 1e-8));
    for (int i = 0; i < 120; ++i) {
      VectorXd probe(d);
      for (int k = 0; k < d; ++k) probe[k] = rng.uniform(-1.2, 1.2);
      const bool via_h = contains(hull, probe, 1e-7);
      const bool via_lp = in_hull_lp(pts, probe);
      if (via_h != via_lp)
        CHECK(std::abs((hull.H() * probe - hull.h()).maxCoeff()) < 1e-6);
    }
  }
}

TEST_CASE("3-D cube corners give six facets after coplanar merge") {
  std::vector<VectorXd> corners;
  for (int mask = 0; mask < 8; ++mask) {
    VectorXd p(3);
    p << (mask & 1 ? 1 : -1), (mask & 2 ? 1 : -1), (mask & 4 ? 1 : -1);
    corners.push_back(p);
  }
  Polytope hull = convex_hull(PointCloud(corners));
  CHECK(hull.num_rows() == 6);
  VectorXd inside(3), outside(3);
  inside << 0.5, -0.5, 0.9;
  outside << 1.1, 0, 0;
  CHECK(contains(hull, inside, 0.0));
  CHECK_FALSE(contains(hull, outside, 1e-6));
}

TEST_CASE("support function on boxes and general polytopes") {
  Polytope W = Polytope::box(vec2(-0.5, -0.5), vec2(0.5, 0.5));
  CHECK(support(W, vec2(1, 1)) == Catch::Approx(1.0).margin(1e-12));
  CHECK(support(W, vec2(0, 0)) == 0.0);
  CHECK(support(W, vec2(1, -2)) == Catch::Approx(1.5).margin(1e-12));

  // Same box written with an extra non-axis row: exercises the LP path.
  MatrixXd H(5, 2);
  H << 1, 0, -1, 0, 0, 1, 0, -1, 1, 1;
  VectorXd h(5);
  h << 0.5, 0.5, 0.5, 0.5, 2.0;
  Polytope Wlp(H, h);
  CHECK(support(Wlp, vec2(1, 1)) == Catch::Approx(1.0).margin(1e-9));
  CHECK(support(Wlp, vec2(1, -2)) == Catch::Approx(1.5).margin(1e-9));

  // Unbounded direction and empty set raise.
  MatrixXd Hu(1, 2);
  Hu << 1, 0;
  Polytope half(Hu, VectorXd::Ones(1));
  CHECK_THROWS_AS(support(half, vec2(0, 1)), UnboundedError);
  MatrixXd He(2, 1);
  He << 1, -1;
  VectorXd he(2);
  he << -1, -1;
  CHECK_THROWS_AS(support(Polytope(He, he), VectorXd::Ones(1)), EmptySetError);
}

TEST_CASE("is_empty on boxes and contradictions") {
  CHECK_FALSE(is_empty(Polytope::cube(2, 1.0)));
  MatrixXd H(2, 1);
  H << 1, -1;
  VectorXd h(2);
  h << -1, -1;  // x <= -1, x >= 1
  CHECK(is_empty(Polytope(H, h)));
}

TEST_CASE("scale stretches offsets about the origin") {
  Polytope box = known_box_20();
  Polytope same = scale(box, 1.0);
  CHECK((same.h() - box.h()).lpNorm<Eigen::Infinity>() == 0.0);

  Polytope twice = scale(Polytope::cube(2, 1.0), 2.0);
  CHECK(contains(twice, vec2(1.9, -1.9), 0.0));
  CHECK_FALSE(contains(twice, vec2(2.1, 0), 0.0));

  Polytope half = scale(box, 0.5);
  CHECK_FALSE(contains(half, vec2(-15, 15), 0.0));
  CHECK(contains(half, vec2(-9, 9), 0.0));

  CHECK_THROWS_AS(scale(box, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(scale(box, -1.0), InvalidArgumentError);
}

TEST_CASE("property: hull of hull vertices represents the same set") {
  RngStream rng(41);
  std::vector<VectorXd> pts;
  for (int i = 0; i < 60; ++i)
    pts.push_back(vec2(rng.uniform(-3, 3), rng.uniform(-3, 3)));
  Polytope hull = convex_hull(PointCloud(pts));
  auto verts = vertices_2d(hull);
  std::vector<VectorXd> vpts;
  for (const auto& v : verts) vpts.push_back(vec2(v.x(), v.y()));
  Polytope hull2 = convex_hull(PointCloud(vpts));
  for (int i = 0; i < 1000; ++i) {
    VectorXd probe = vec2(rng.uniform(-3.5, 3.5), rng.uniform(-3.5, 3.5));
    const bool a = contains(hull, probe, 1e-6);
    const bool b = contains(hull2, probe, 1e-6);
    if (a != b)
      CHECK(std::abs((hull.H() * probe - hull.h()).maxCoeff()) < 1e-5);
  }
}

TEST_CASE("property: hull monotonicity under cloud inclusion") {
  RngStream rng(43);
  std::vector<VectorXd> small, big;
  for (int i = 0; i < 20; ++i) {
    VectorXd p = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    small.push_back(p);
    big.push_back(p);
  }
  for (int i = 0; i < 20; ++i)
    big.push_back(vec2(rng.uniform(-3, 3), rng.uniform(-3, 3)));
  Polytope hs = convex_hull(PointCloud(small));
  Polytope hb = convex_hull(PointCloud(big));
  for (int i = 0; i < 500; ++i) {
    VectorXd probe = vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    if (contains(hs, probe, 0.0)) CHECK(contains(hb, probe, 1e-9));
  }
}

TEST_CASE("property: support is subadditive in the direction") {
  RngStream rng(47);
  std::vector<VectorXd> pts;
  for (int i = 0; i < 30; ++i)
    pts.push_back(vec2(rng.uniform(-2, 2), rng.uniform(-1, 3)));
  Polytope P = convex_hull(PointCloud(pts));
  for (int i = 0; i < 100; ++i) {
    VectorXd a = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    VectorXd b = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    CHECK(support(P, a + b) <= support(P, a) + support(P, b) + 1e-9);
  }
}

TEST_CASE("property: intersect soundness on random points") {
  Polytope P = known_box_20();
  Polytope Q = wedge_5();
  Polytope I = intersect(P, Q);
  RngStream rng(53);
  for (int i = 0; i < 500; ++i) {
    VectorXd x = vec2(rng.uniform(-25, 25), rng.uniform(-25, 25));
    CHECK(contains(I, x, 0.0) == (contains(P, x, 0.0) && contains(Q, x, 0.0)));
  }
}

TEST_CASE("redundancy removal keeps the set identical") {
  Polytope I = intersect(intersect(known_box_20(), wedge_5()), known_box_20());
  Polytope R = remove_redundant_rows(I);
  CHECK(R.num_rows() < I.num_rows());
  RngStream rng(59);
  for (int i = 0; i < 500; ++i) {
    VectorXd x = vec2(rng.uniform(-25, 25), rng.uniform(-25, 25));
    CHECK(contains(R, x, 1e-9) == contains(I, x, 1e-9));
  }
}

TEST_CASE("chebyshev center of a box is its middle") {
  auto [c, r] = chebyshev_center(Polytope::cube(2, 1.0));
  CHECK(c.lpNorm<Eigen::Infinity>() == Catch::Approx(0.0).margin(1e-9));
  CHECK(r == Catch::Approx(1.0).margin(1e-9));
  MatrixXd H(2, 1);
  H << 1, -1;
  VectorXd h(2);
  h << -1, -1;
  CHECK_THROWS_AS(chebyshev_center(Polytope(H, h)), EmptySetError);
}

TEST_CASE("vertices_2d recovers box corners") {
  auto verts = vertices_2d(Polytope::cube(2, 2.0));
  REQUIRE(verts.size() == 4);
  double area = 0.0;
  for (size_t i = 0; i < verts.size(); ++i) {
    const auto& a = verts[i];
    const auto& b = verts[(i + 1) % verts.size()];
    area += a.x() * b.y() - b.x() * a.y();
  }
  CHECK(std::abs(area) / 2.0 == Catch::Approx(16.0).margin(1e-9));
}

TEST_CASE("box_bounds detects boxes and rejects wedges") {
  auto bb = box_bounds(Polytope::box(vec2(-0.5, -1), vec2(0.5, 2)));
  REQUIRE(bb.has_value());
  CHECK(bb->first[1] == -1.0);
  CHECK(bb->second[0] == 0.5);
  CHECK_FALSE(box_bounds(wedge_5()).has_value());
}
