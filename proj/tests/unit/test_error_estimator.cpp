#include <gtest/gtest.h>

#include <Eigen/LU>

#include "hexadapt/corotational.hpp"
#include "hexadapt/error_estimator.hpp"

using namespace hexadapt;

namespace {

// Trilinear stress field, one independent polynomial per component.
Vec6 trilinear(const Vec3& p) {
  Vec6 s;
  for (int k = 0; k < 6; ++k) {
    const double a = 1.0 + k;
    s[k] = a - 0.5 * p.x() + 0.25 * k * p.y() + 2.0 * p.z() + 0.3 * a * p.x() * p.y() - 0.2 * p.y() * p.z() +
           0.1 * k * p.z() * p.x() + 0.05 * a * p.x() * p.y() * p.z();
  }
  return s;
}

Vec3 center_of(const HexMesh& m, ElemId e) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : m.rest_corners(e)) c += p / 8.0;
  return c;
}

bool interior(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  for (int k = 0; k < 3; ++k) {
    if (p[k] <= lo[k] + 1e-12 || p[k] >= hi[k] - 1e-12) return false;
  }
  return true;
}

}  // namespace

TEST(Spr, ReproducesTrilinearFieldAtInteriorNodes) {
  const Vec3 lo(-1.0, 0.5, 2.0), ext(3.0, 2.0, 1.5);
  const HexMesh m = build_grid(lo, ext, {4, 3, 3});
  ElementStress center(m.element_capacity(), Vec6::Zero());
  for (ElemId e : m.live_elements()) center[e.index()] = trilinear(center_of(m, e));
  int checked = 0;
  for (NodeId n : m.live_nodes()) {
    const Vec3 p = m.rest_position(n);
    if (!interior(p, lo, lo + ext)) continue;
    const Vec6 expect = trilinear(p);
    EXPECT_LE((spr_recover(m, n, center) - expect).norm(), 1e-9 * expect.norm());
    ++checked;
  }
  EXPECT_EQ(checked, 3 * 2 * 2);
}

TEST(Spr, ConstantFieldEverywhereIncludingFallbackNodes) {
  const HexMesh m = build_grid(Vec3::Zero(), Vec3(1.0, 1.0, 1.0), {3, 2, 2});
  const Vec6 s = (Vec6() << 1.0, -2.0, 0.5, 0.1, 0.0, -0.3).finished();
  const ElementStress center(m.element_capacity(), s);
  const RecoveredStressField f = recover_stress_field(m, center);
  EXPECT_GT(f.fallback_nodes, 0u);
  for (NodeId n : m.live_nodes()) EXPECT_LE((f.nodal[n.index()] - s).norm(), 1e-9 * s.norm());
}

TEST(Spr, PolynomialNeedsEightSamples) {
  std::vector<Vec3> pts(7, Vec3::Zero());
  std::vector<Vec6> val(7, Vec6::Zero());
  for (int i = 0; i < 7; ++i) pts[static_cast<std::size_t>(i)] = Vec3(i, i * i, 1.0);
  EXPECT_FALSE(StressPolynomial::fit(pts, val));
}

TEST(Spr, IsolatedElementFails) {
  const HexMesh m = build_grid(Vec3::Zero(), Vec3::Ones(), {1, 1, 1});
  const ElementStress center(m.element_capacity(), Vec6::Ones());
  EXPECT_THROW((void)spr_recover(m, m.live_nodes().front(), center), EstimatorFailure);
}

// An affine displacement gives a constant stress field: every element error
// vanishes.
TEST(Estimator, ConstantStressHasZeroError) {
  const HexMesh m = build_grid(Vec3::Zero(), Vec3(2.0, 1.0, 1.0), {4, 2, 2});
  const Material mat{1e3, 0.3, 1.0, 0.0, 0.0};
  Mat3 g;
  g << 1e-3, 2e-4, 0.0, 0.0, -5e-4, 1e-4, 3e-4, 0.0, 2e-3;
  NodalField x = rest_field(m);
  for (NodeId n : m.live_nodes()) x[n.index()] += g * m.rest_position(n);
  const ErrorEstimate est = estimate_error(m, mat, x, false);
  ASSERT_TRUE(est.relative_error);
  double energy = 0.0;
  for (double w : est.energies) energy += w;
  for (double e : est.errors) EXPECT_LE(e, 1e-12 * std::sqrt(energy));
  EXPECT_LE(*est.relative_error, 1e-12);
}

TEST(Estimator, UnloadedBodyHasUndefinedRelativeError) {
  const HexMesh m = build_grid(Vec3::Zero(), Vec3::Ones(), {2, 2, 2});
  const ErrorEstimate est = estimate_error(m, Material{1.0, 0.3, 1.0, 0.0, 0.0}, rest_field(m));
  EXPECT_FALSE(est.relative_error);
}

TEST(Estimator, ElementErrorOfConstantRecoveryIsEnergyDistance) {
  CornerPositions c;
  for (int i = 0; i < 8; ++i) {
    const auto& s = kCornerSigns[static_cast<std::size_t>(i)];
    c[static_cast<std::size_t>(i)] = Vec3(s[0], s[1], s[2]);
  }
  const Mat6 compliance = elasticity_matrix(2.0, 0.25).inverse();
  const Vec6 raw = (Vec6() << 1, 0, 0, 0, 0, 0).finished();
  std::array<Vec6, 8> rec;
  rec.fill(Vec6::Zero());
  // Volume 8, compliance(0, 0) = 1 / E.
  EXPECT_NEAR(element_error(c, raw, rec, compliance), std::sqrt(8.0 * 0.5), 1e-12);
  EXPECT_NEAR(element_energy(c, raw, compliance), 8.0 * 0.5, 1e-12);
}

TEST(Marking, MaximumStrategyWithTrends) {
  const std::vector<ElementIndicator> ind = {
      {ElemId(0), 1.0, +1, 0}, {ElemId(1), 0.5, +1, 0}, {ElemId(2), 0.2, +1, 0},
      {ElemId(3), 0.9, -1, 1}, {ElemId(4), 0.1, -1, 1}, {ElemId(5), 0.1, -1, 0},
  };
  const MarkingResult r = mark(ind, 0.4);
  EXPECT_EQ(r.refine, (std::vector<ElemId>{ElemId(0), ElemId(1)}));
  EXPECT_EQ(r.coarsen, (std::vector<ElemId>{ElemId(4)}));
  EXPECT_DOUBLE_EQ(r.max_error, 1.0);
  EXPECT_THROW((void)mark(ind, 1.0), InvalidArgument);
}

TEST(Marking, StressTrend) {
  const Vec6 a = Vec6::Constant(1.0);
  EXPECT_EQ(stress_trend(2.0 * a, a), 1);
  EXPECT_EQ(stress_trend(a, 2.0 * a), -1);
  EXPECT_EQ(stress_trend(a, a), 0);
  // Sign flip with equal magnitude is no change.
  EXPECT_EQ(stress_trend(-a, a), 0);
}
