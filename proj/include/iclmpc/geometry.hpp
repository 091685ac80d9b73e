#pragma once

// Halfspace polytopes and the set operations every other module leans on:
// membership, intersection, support functions, emptiness, scaling and
// convex hulls of sampled point clouds. All values are immutable after
// construction and all operations are pure.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "iclmpc/errors.hpp"
#include "iclmpc/linprog.hpp"

namespace iclmpc {

/// Convex set {x : H x <= h}. Rows of H are facet normals; a zero row is
/// rejected at construction since it encodes either a tautology or an
/// unsatisfiable constraint instead of a halfspace.
class Polytope {
 public:
  /// Zero-row placeholder over R^1 (the whole line); useful as the
  /// not-yet-assigned value in aggregates.
  Polytope() : H_(0, 1), h_(0) {}

  Polytope(Eigen::MatrixXd H, Eigen::VectorXd h)
      : H_(std::move(H)), h_(std::move(h)) {
    if (H_.rows() != h_.size())
      throw DimensionError("Polytope: H and h row counts differ");
    if (H_.cols() < 1) throw DimensionError("Polytope: H needs >= 1 column");
    for (Eigen::Index i = 0; i < H_.rows(); ++i) {
      if (H_.row(i).lpNorm<Eigen::Infinity>() == 0.0)
        throw InvalidArgumentError("Polytope: zero row in H");
    }
  }

  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::VectorXd& h() const { return h_; }
  int dim() const { return static_cast<int>(H_.cols()); }
  int num_rows() const { return static_cast<int>(H_.rows()); }

  /// Axis-aligned box {x : lo <= x <= hi}.
  static Polytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    if (lo.size() != hi.size())
      throw DimensionError("Polytope::box: lo/hi length mismatch");
    const int n = static_cast<int>(lo.size());
    Eigen::MatrixXd H(2 * n, n);
    Eigen::VectorXd h(2 * n);
    H.setZero();
    for (int i = 0; i < n; ++i) {
      H(i, i) = 1.0;
      h[i] = hi[i];
      H(n + i, i) = -1.0;
      h[n + i] = -lo[i];
    }
    return Polytope(std::move(H), std::move(h));
  }

  static Polytope cube(int n, double half_width) {
    return box(Eigen::VectorXd::Constant(n, -half_width),
               Eigen::VectorXd::Constant(n, half_width));
  }

 private:
  Eigen::MatrixXd H_;
  Eigen::VectorXd h_;
};

/// Finite list of same-dimension points.
struct PointCloud {
  std::vector<Eigen::VectorXd> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Eigen::VectorXd> pts) : points(std::move(pts)) {
    for (const auto& p : points) {
      if (p.size() != points.front().size())
        throw DimensionError("PointCloud: inconsistent point dimensions");
    }
  }

  void add(Eigen::VectorXd p) {
    if (!points.empty() && p.size() != points.front().size())
      throw DimensionError("PointCloud: inconsistent point dimensions");
    points.push_back(std::move(p));
  }

  bool empty() const { return points.empty(); }
  int size() const { return static_cast<int>(points.size()); }
  int dim() const {
    if (points.empty()) throw InvalidArgumentError("PointCloud: empty");
    return static_cast<int>(points.front().size());
  }
};

/// Default membership slack: 1e-7 scaled by the offset magnitude.
inline double default_membership_tol(const Polytope& P) {
  const double scale =
      P.num_rows() > 0 ? P.h().lpNorm<Eigen::Infinity>() : 1.0;
  return 1e-7 * std::max(1.0, scale);
}

/// True iff H x <= h + tol componentwise.
inline bool contains(const Polytope& P, const Eigen::VectorXd& x, double tol) {
  if (x.size() != P.dim())
    throw DimensionError("contains: point dimension != polytope dimension");
  if (tol < 0.0) throw InvalidArgumentError("contains: negative tolerance");
  if (P.num_rows() == 0) return true;
  return ((P.H() * x - P.h()).array() <= tol).all();
}

inline bool contains(const Polytope& P, const Eigen::VectorXd& x) {
  return contains(P, x, default_membership_tol(P));
}

/// Row-stacked intersection. No redundancy removal; see
/// remove_redundant_rows for the optional post-pass.
inline Polytope intersect(const Polytope& P, const Polytope& Q) {
  if (P.dim() != Q.dim())
    throw DimensionError("intersect: dimension mismatch");
  Eigen::MatrixXd H(P.num_rows() + Q.num_rows(), P.dim());
  Eigen::VectorXd h(P.num_rows() + Q.num_rows());
  H << P.H(), Q.H();
  h << P.h(), Q.h();
  return Polytope(std::move(H), std::move(h));
}

/// {x : H x <= gamma h}; for 0 in P and gamma >= 1 this inflates P about
/// the origin.
inline Polytope scale(const Polytope& P, double gamma) {
  if (gamma <= 0.0) throw InvalidArgumentError("scale: gamma must be > 0");
  return Polytope(P.H(), gamma * P.h());
}

/// Recovers (lo, hi) if every row of P constrains exactly one coordinate,
/// i.e. P is an axis-aligned box. Returns nothing otherwise.
inline std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> box_bounds(
    const Polytope& P) {
  const int n = P.dim();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -kInf);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, kInf);
  for (int r = 0; r < P.num_rows(); ++r) {
    int idx = -1;
    for (int c = 0; c < n; ++c) {
      if (P.H()(r, c) != 0.0) {
        if (idx >= 0) return std::nullopt;
        idx = c;
      }
    }
    const double coef = P.H()(r, idx);
    const double bound = P.h()[r] / coef;
    if (coef > 0.0) {
      hi[idx] = std::min(hi[idx], bound);
    } else {
      lo[idx] = std::max(lo[idx], bound);
    }
  }
  if (!lo.allFinite() || !hi.allFinite()) return std::nullopt;
  return std::make_pair(lo, hi);
}

/// max_{x in P} a'x. Closed form for boxes, LP otherwise.
inline double support(const Polytope& P, const Eigen::VectorXd& a) {
  if (a.size() != P.dim())
    throw DimensionError("support: direction dimension mismatch");
  if (auto bb = box_bounds(P)) {
    const auto& [lo, hi] = *bb;
    if ((lo.array() > hi.array() + 1e-12).any())
      throw EmptySetError("support: empty box");
    double s = 0.0;
    for (int i = 0; i < P.dim(); ++i) s += std::max(a[i] * lo[i], a[i] * hi[i]);
    return s;
  }
  LpResult r = solve_lp(a, P.H(), P.h());
  if (r.status == LpStatus::infeasible)
    throw EmptySetError("support: empty polytope");
  if (r.status == LpStatus::unbounded)
    throw UnboundedError("support: unbounded direction");
  return r.objective;
}

/// True iff {x : H x <= h + tol} admits no point.
inline bool is_empty(const Polytope& P, double tol = 1e-8) {
  if (P.num_rows() == 0) return false;
  const Eigen::VectorXd relaxed =
      P.h() + Eigen::VectorXd::Constant(P.num_rows(), tol);
  return !lp_feasible_point(P.H(), relaxed).has_value();
}

/// Chebyshev center: deepest point and its inscribed-ball radius.
/// The radius is capped at 1e9 so unbounded sets still return a point.
inline std::pair<Eigen::VectorXd, double> chebyshev_center(const Polytope& P) {
  const int n = P.dim();
  const int m = P.num_rows();
  Eigen::MatrixXd A(m + 1, n + 1);
  Eigen::VectorXd b(m + 1);
  for (int i = 0; i < m; ++i) {
    A.block(i, 0, 1, n) = P.H().row(i);
    A(i, n) = P.H().row(i).norm();
    b[i] = P.h()[i];
  }
  A.row(m).setZero();
  A(m, n) = 1.0;
  b[m] = 1e9;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n + 1);
  c[n] = 1.0;
  LpResult r = solve_lp(c, A, b);
  // A negative optimal radius certifies emptiness (the LP itself stays
  // feasible since the radius variable is free).
  if (r.status != LpStatus::optimal || r.x[n] < -1e-9)
    throw EmptySetError("chebyshev_center: empty polytope");
  return {r.x.head(n), r.x[n]};
}

/// Drops rows implied by the remaining ones (support-function test per
/// row). The returned set equals the input as a point set.
inline Polytope remove_redundant_rows(const Polytope& P, double tol = 1e-9) {
  const int m = P.num_rows();
  if (m <= 1) return P;
  std::vector<int> kept;
  kept.reserve(m);
  for (int i = 0; i < m; ++i) {
    // Candidate system: all rows except i (those already dropped stay
    // dropped), plus a cap that keeps the LP bounded.
    std::vector<int> rows;
    for (int k : kept) rows.push_back(k);
    for (int k = i + 1; k < m; ++k) rows.push_back(k);
    Eigen::MatrixXd A(static_cast<int>(rows.size()) + 1, P.dim());
    Eigen::VectorXd b(static_cast<int>(rows.size()) + 1);
    for (size_t k = 0; k < rows.size(); ++k) {
      A.row(static_cast<int>(k)) = P.H().row(rows[k]);
      b[static_cast<int>(k)] = P.h()[rows[k]];
    }
    A.row(static_cast<int>(rows.size())) = P.H().row(i);
    b[static_cast<int>(rows.size())] = P.h()[i] + 1.0;
    LpResult r = solve_lp(P.H().row(i).transpose(), A, b);
    if (r.status == LpStatus::infeasible) {
      kept.push_back(i);  // keep everything on an empty system
      continue;
    }
    if (r.objective > P.h()[i] + tol) kept.push_back(i);
  }
  if (kept.empty()) kept.push_back(0);
  Eigen::MatrixXd H(static_cast<int>(kept.size()), P.dim());
  Eigen::VectorXd h(static_cast<int>(kept.size()));
  for (size_t k = 0; k < kept.size(); ++k) {
    H.row(static_cast<int>(k)) = P.H().row(kept[k]);
    h[static_cast<int>(k)] = P.h()[kept[k]];
  }
  return Polytope(std::move(H), std::move(h));
}

/// Rank of the affine hull of the cloud (0 for a single point). Relative
/// singular-value cutoff 1e-9.
inline int affine_rank(const PointCloud& cloud, double rel_tol = 1e-9) {
  if (cloud.empty()) throw InvalidArgumentError("affine_rank: empty cloud");
  const int n = cloud.dim();
  const int m = cloud.size();
  Eigen::MatrixXd D(m, n);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (const auto& p : cloud.points) mean += p;
  mean /= static_cast<double>(m);
  for (int i = 0; i < m; ++i) D.row(i) = (cloud.points[i] - mean).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > rel_tol * sv[0]) ++rank;
  return rank;
}

namespace detail {

inline double cloud_scale(const PointCloud& cloud) {
  double s = 0.0;
  for (const auto& p : cloud.points)
    s = std::max(s, p.lpNorm<Eigen::Infinity>());
  return std::max(1.0, s);
}

// Monotone chain; returns CCW hull vertices. Collinear points are
// dropped with a relative tolerance so near-flat triples do not create
// spurious facets.
inline std::vector<Eigen::Vector2d> hull_chain_2d(
    const std::vector<Eigen::VectorXd>& pts, double scale) {
  std::vector<Eigen::Vector2d> p;
  p.reserve(pts.size());
  for (const auto& v : pts) p.emplace_back(v[0], v[1]);
  std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  p.erase(std::unique(p.begin(), p.end(),
                      [scale](const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
                        return (a - b).cwiseAbs().maxCoeff() < 1e-12 * scale;
                      }),
          p.end());
  const double eps = 1e-9 * scale * scale;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                  const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) -
           (a.y() - o.y()) * (b.x() - o.x());
  };
  const int n = static_cast<int>(p.size());
  std::vector<Eigen::Vector2d> hull(2 * n + 1);
  int k = 0;
  for (int i = 0; i < n; ++i) {  // lower
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p[i]) <= eps) --k;
    hull[k++] = p[i];
  }
  for (int i = n - 2, t = k + 1; i >= 0; --i) {  // upper
    while (k >= t && cross(hull[k - 2], hull[k - 1], p[i]) <= eps) --k;
    hull[k++] = p[i];
  }
  hull.resize(k - 1);
  return hull;
}

struct HullFacet {
  std::vector<int> vertices;
  Eigen::VectorXd normal;
  double offset = 0.0;
  bool alive = true;
};

inline std::pair<Eigen::VectorXd, double> facet_plane(
    const std::vector<Eigen::VectorXd>& pts, const std::vector<int>& vtx,
    const Eigen::VectorXd& interior, double scale) {
  const int d = static_cast<int>(pts.front().size());
  Eigen::MatrixXd E(d - 1, d);
  for (int i = 1; i < d; ++i)
    E.row(i - 1) = (pts[vtx[i]] - pts[vtx[0]]).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(E, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (d >= 3 && sv[d - 3] < 1e-10 * scale)
    throw ConvergenceError("convex_hull: degenerate facet encountered");
  Eigen::VectorXd n = svd.matrixV().col(d - 1);
  double b = n.dot(pts[vtx[0]]);
  if (n.dot(interior) > b) {
    n = -n;
    b = -b;
  }
  return {n, b};
}

// Beneath-beyond incremental hull for d in {3, 4}.
inline std::vector<HullFacet> incremental_hull(
    const std::vector<Eigen::VectorXd>& pts, double scale) {
  const int d = static_cast<int>(pts.front().size());
  const int npts = static_cast<int>(pts.size());
  const double eps_vis = 1e-9 * scale;

  // Initial simplex: greedy farthest point with Gram-Schmidt residuals,
  // anchored at the lexicographically smallest point for determinism.
  std::vector<int> chosen;
  int first = 0;
  for (int i = 1; i < npts; ++i)
    if (pts[i].lpNorm<Eigen::Infinity>() <
        pts[first].lpNorm<Eigen::Infinity>())
      first = i;
  chosen.push_back(first);
  std::vector<Eigen::VectorXd> basis;
  while (static_cast<int>(chosen.size()) < d + 1) {
    int best = -1;
    double best_res = 0.0;
    Eigen::VectorXd best_dir;
    for (int i = 0; i < npts; ++i) {
      Eigen::VectorXd r = pts[i] - pts[chosen[0]];
      for (const auto& b : basis) r -= b.dot(r) * b;
      const double rn = r.norm();
      if (rn > best_res) {
        best_res = rn;
        best = i;
        best_dir = r / rn;
      }
    }
    if (best < 0 || best_res < 1e-9 * scale)
      throw DegenerateCloudError("convex_hull: cloud is not full-dimensional",
                                 static_cast<int>(basis.size()));
    chosen.push_back(best);
    basis.push_back(best_dir);
  }
  Eigen::VectorXd interior = Eigen::VectorXd::Zero(d);
  for (int i : chosen) interior += pts[i];
  interior /= static_cast<double>(chosen.size());

  std::vector<HullFacet> facets;
  for (int skip = 0; skip <= d; ++skip) {
    HullFacet f;
    for (int i = 0; i <= d; ++i)
      if (i != skip) f.vertices.push_back(chosen[i]);
    auto [n, b] = facet_plane(pts, f.vertices, interior, scale);
    f.normal = n;
    f.offset = b;
    facets.push_back(std::move(f));
  }

  for (int p = 0; p < npts; ++p) {
    if (std::find(chosen.begin(), chosen.end(), p) != chosen.end()) continue;
    std::vector<int> visible;
    for (size_t f = 0; f < facets.size(); ++f) {
      if (facets[f].alive &&
          facets[f].normal.dot(pts[p]) > facets[f].offset + eps_vis)
        visible.push_back(static_cast<int>(f));
    }
    if (visible.empty()) continue;
    std::map<std::vector<int>, int> ridge_count;
    for (int f : visible) {
      const auto& vs = facets[f].vertices;
      for (size_t skip = 0; skip < vs.size(); ++skip) {
        std::vector<int> ridge;
        for (size_t i = 0; i < vs.size(); ++i)
          if (i != skip) ridge.push_back(vs[i]);
        std::sort(ridge.begin(), ridge.end());
        ridge_count[ridge]++;
      }
    }
    for (int f : visible) facets[f].alive = false;
    for (const auto& [ridge, count] : ridge_count) {
      if (count != 1) continue;  // interior to the visible region
      HullFacet f;
      f.vertices = ridge;
      f.vertices.push_back(p);
      auto [n, b] = facet_plane(pts, f.vertices, interior, scale);
      f.normal = n;
      f.offset = b;
      facets.push_back(std::move(f));
    }
  }
  std::vector<HullFacet> alive;
  for (auto& f : facets)
    if (f.alive) alive.push_back(std::move(f));
  return alive;
}

}  // namespace detail

/// Exact H-representation of conv(cloud). Monotone chain for dimension 2,
/// incremental facet hull for 3 and 4; higher dimensions are rejected.
/// Affinely degenerate clouds raise DegenerateCloudError carrying the
/// affine rank.
inline Polytope convex_hull(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidArgumentError("convex_hull: empty cloud");
  const int d = cloud.dim();
  if (d > 4)
    throw UnsupportedDimensionError(
        "convex_hull: dimensions above 4 are not supported");
  const double scale = detail::cloud_scale(cloud);
  const int rank = affine_rank(cloud);
  if (rank < d)
    throw DegenerateCloudError("convex_hull: cloud is not full-dimensional",
                               rank);

  if (d == 1) {
    double lo = cloud.points.front()[0], hi = lo;
    for (const auto& p : cloud.points) {
      lo = std::min(lo, p[0]);
      hi = std::max(hi, p[0]);
    }
    Eigen::MatrixXd H(2, 1);
    H << 1.0, -1.0;
    Eigen::VectorXd h(2);
    h << hi, -lo;
    return Polytope(std::move(H), std::move(h));
  }

  if (d == 2) {
    const auto hull = detail::hull_chain_2d(cloud.points, scale);
    const int k = static_cast<int>(hull.size());
    Eigen::MatrixXd H(k, 2);
    Eigen::VectorXd h(k);
    for (int i = 0; i < k; ++i) {
      const Eigen::Vector2d& v = hull[i];
      const Eigen::Vector2d& w = hull[(i + 1) % k];
      Eigen::Vector2d e = w - v;
      Eigen::Vector2d n(e.y(), -e.x());  // outward for CCW traversal
      n.normalize();
      H.row(i) = n.transpose();
      h[i] = n.dot(v);
    }
    return Polytope(std::move(H), std::move(h));
  }

  const auto facets = detail::incremental_hull(cloud.points, scale);
  std::vector<std::pair<Eigen::VectorXd, double>> rows;
  for (const auto& f : facets) {
    bool dup = false;
    for (const auto& [n, b] : rows) {
      if ((n - f.normal).lpNorm<Eigen::Infinity>() < 1e-7 &&
          std::abs(b - f.offset) < 1e-7 * scale) {
        dup = true;
        break;
      }
    }
    if (!dup) rows.emplace_back(f.normal, f.offset);
  }
  Eigen::MatrixXd H(static_cast<int>(rows.size()), d);
  Eigen::VectorXd h(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    H.row(static_cast<int>(i)) = rows[i].first.transpose();
    h[static_cast<int>(i)] = rows[i].second;
  }
  return Polytope(std::move(H), std::move(h));
}

/// Vertices of a bounded 2-D polytope, CCW order. Intended for exporting
/// plot data; requires dim == 2.
inline std::vector<Eigen::Vector2d> vertices_2d(const Polytope& P) {
  if (P.dim() != 2)
    throw UnsupportedDimensionError("vertices_2d: requires dimension 2");
  const double tol = 10.0 * default_membership_tol(P);
  const double scale = std::max(1.0, P.h().lpNorm<Eigen::Infinity>());
  std::vector<Eigen::Vector2d> verts;
  for (int i = 0; i < P.num_rows(); ++i) {
    for (int j = i + 1; j < P.num_rows(); ++j) {
      Eigen::Matrix2d A;
      A.row(0) = P.H().row(i);
      A.row(1) = P.H().row(j);
      const double det = A.determinant();
      if (std::abs(det) < 1e-12) continue;
      Eigen::Vector2d b(P.h()[i], P.h()[j]);
      Eigen::Vector2d v = A.inverse() * b;
      if (!contains(P, v, tol)) continue;
      bool dup = false;
      for (const auto& u : verts)
        if ((u - v).lpNorm<Eigen::Infinity>() < 1e-7 * scale) dup = true;
      if (!dup) verts.push_back(v);
    }
  }
  if (verts.size() > 2) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& v : verts) c += v;
    c /= static_cast<double>(verts.size());
    std::sort(verts.begin(), verts.end(),
              [&c](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                return std::atan2(a.y() - c.y(), a.x() - c.x()) <
                       std::atan2(b.y() - c.y(), b.x() - c.x());
              });
  }
  return verts;
}

}  // namespace iclmpc
