#include "doctest.h"

#include "pathlaw/geometry.hpp"

using namespace pathlaw;

namespace {

SnapshotSeries two_point_series() {
  SnapshotSeries s;
  s.snapshots.resize(2);
  s.snapshots[0].time = 0.0;
  s.snapshots[0].points = MatrixXd::Zero(1, 2);
  s.snapshots[1].time = 1.0;
  s.snapshots[1].points = MatrixXd::Ones(1, 2);
  return s;
}

}  // namespace

TEST_CASE("support is the deduplicated union of sampled points") {
  SnapshotSeries s = two_point_series();
  Support sup = build_support(s);
  CHECK(sup.size() == 2);
  CHECK(sup.points(0, 0) == 0.0);
  CHECK(sup.points(1, 0) == 1.0);

  s.snapshots[1].points = MatrixXd::Zero(1, 2);  // exact duplicate
  CHECK(build_support(s).size() == 1);

  // near-duplicates are kept
  s.snapshots[1].points(0, 0) = 1e-15;
  CHECK(build_support(s).size() == 2);
}

TEST_CASE("support preserves insertion order and appends extras") {
  SnapshotSeries s = two_point_series();
  VectorXd extra(2);
  extra << 5.0, 5.0;
  Support sup = build_support(s, {extra});
  CHECK(sup.size() == 3);
  CHECK(sup.points(2, 0) == 5.0);
}

TEST_CASE("dimension mismatch across time-points is rejected") {
  SnapshotSeries s = two_point_series();
  s.snapshots[1].points = MatrixXd::Zero(1, 3);
  CHECK_THROWS_AS(build_support(s), InvalidInput);
}

TEST_CASE("gibbs kernel matches hand values") {
  MatrixXd pts(2, 1);
  pts << 0.0, 1.0;
  Support sup = support_from_matrix(pts);

  GibbsKernel k = gibbs_kernel(sup, 0.5);
  CHECK(k.entries(0, 0) == 1.0);
  CHECK(k.entries(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

  // coincident points have unit kernel entry at any epsilon
  MatrixXd same(2, 1);
  same << 2.0, 2.0 + 0.0;  // distinct rows, same coordinate would be deduped upstream
  same(1, 0) = 2.0;
  Support sup2 = support_from_matrix(same);
  CHECK(gibbs_kernel(sup2, 0.123).entries(0, 1) == 1.0);

  // epsilon -> infinity: all entries -> 1, row-normalized rows -> uniform
  GibbsKernel big = gibbs_kernel(sup, 1e14, std::nullopt, true);
  CHECK(big.entries(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(big.entries.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kernel symmetry and monotonicity in epsilon") {
  MatrixXd pts(5, 3);
  pts << 0.1, 0.2, 0.3, -1.0, 0.5, 2.0, 0.0, 0.0, 0.0, 2.0, -2.0, 1.0, 0.3, 0.3, 0.3;
  Support sup = support_from_matrix(pts);
  GibbsKernel a = gibbs_kernel(sup, 0.3);
  GibbsKernel b = gibbs_kernel(sup, 0.9);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      CHECK(a.entries(i, j) == a.entries(j, i));
      CHECK(b.entries(i, j) >= a.entries(i, j));
    }
}

TEST_CASE("cost normalization makes the mean product cost one") {
  MatrixXd pts(4, 2);
  pts << 0, 0, 1, 0, 0, 2, 3, 1;
  Support sup = support_from_matrix(pts);
  // normalizing marginals: two clouds drawn from the support rows
  MatrixXd a = pts.topRows(2);
  MatrixXd b = pts.bottomRows(2);
  GibbsKernel k = gibbs_kernel(sup, 1.0, std::make_pair(a, b));

  // Sum over the product of uniform empirical measures of 2 * scaled cost
  CostMatrix c = cost_matrix(sup, k.cost_scale);
  double acc = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) acc += 0.25 * 2.0 * c.entries(i, 2 + j);
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-10));

  // degenerate normalization rejected
  MatrixXd z = MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(gibbs_kernel(sup, 1.0, std::make_pair(z, z)), InvalidInput);
  CHECK_THROWS_AS(gibbs_kernel(sup, -1.0), InvalidInput);
}

TEST_CASE("locate_points maps samples to support indices") {
  SnapshotSeries s = two_point_series();
  Support sup = build_support(s);
  auto idx = locate_points(sup, s.snapshots[1].points);
  CHECK(idx == std::vector<int>{1});
  MatrixXd missing = MatrixXd::Constant(1, 2, 9.0);
  CHECK_THROWS_AS(locate_points(sup, missing), InvalidInput);
}
