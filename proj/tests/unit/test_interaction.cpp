#include <gtest/gtest.h>

#include <random>

#include <Eigen/Dense>

#include "hexadapt/interaction.hpp"

using namespace hexadapt;

namespace {

struct Instance {
  MatX a;
  VecX b;
  MatX j;
  VecX g;
};

Instance random_instance(unsigned seed, int n, int m) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Instance s;
  MatX r(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) r(i, k) = d(rng);
  }
  s.a = r * r.transpose() + n * MatX::Identity(n, n);
  s.b = VecX::NullaryExpr(n, [&] { return d(rng); });
  s.j = MatX::Zero(m, n);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n; ++k) s.j(i, k) = d(rng);
  }
  s.g = VecX::NullaryExpr(m, [&] { return d(rng); });
  return s;
}

// Direct factorization of [A -J^T; J 0] [dv; lambda] = [b; g].
std::pair<VecX, VecX> kkt(const Instance& s) {
  const auto n = s.a.rows(), m = s.j.rows();
  MatX k = MatX::Zero(n + m, n + m);
  k.topLeftCorner(n, n) = s.a;
  k.topRightCorner(n, m) = -s.j.transpose();
  k.bottomLeftCorner(m, n) = s.j;
  VecX rhs(n + m);
  rhs << s.b, s.g;
  const VecX x = k.partialPivLu().solve(rhs);
  return {x.head(n), x.tail(m)};
}

// One needle point of unit mass against fixed tissue; rows along the world
// axes measure the needle velocity.
struct PointProblem {
  MatX a = MatX::Identity(3, 3);
  VecX b = VecX::Zero(3);
  ConstraintSet set;
  ConstraintJacobian jac;

  explicit PointProblem(ConstraintKind kind) {
    ConstraintPoint p;
    p.kind = kind;
    set.points.push_back(p);
    set.params.tolerance = 1e-12;
    std::vector<Eigen::Triplet<double>> t;
    for (int r = 0; r < 3; ++r) {
      t.emplace_back(r, r, 1.0);
      ConstraintRow row;
      row.point = 0;
      row.direction = r;
      row.weight = 1.0;
      jac.rows.push_back(row);
    }
    jac.j.resize(3, 3);
    jac.j.setFromTriplets(t.begin(), t.end());
  }

  // Pushes the needle point with the given momentum-like load.
  VecX solve(const Vec3& push, ContactSolveReport* rep) {
    b = push;
    const DelassusSolver solver([&](const VecX& r) { return VecX(a.ldlt().solve(r)); }, b,
                                Eigen::SparseMatrix<double>(jac.j.cast<double>()));
    return solve_contact(solver, jac, set, rep);
  }
  [[nodiscard]] static Vec3 relative(const VecX& dv) { return dv.head<3>(); }
};

}  // namespace

TEST(Uzawa, BilateralMatchesKkt) {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const Instance s = random_instance(seed, 12, 4);
    const auto [dv, lambda] = kkt(s);
    const VecX w = VecX::Constant(4, s.a.diagonal().mean());
    const UzawaResult u = uzawa_solve_bilateral(s.a.sparseView(), s.b, s.j.sparseView(), w, s.g, 1e-13, 2000);
    EXPECT_LT((u.dv - dv).norm(), 1e-6 * std::max(1.0, dv.norm())) << seed;
    EXPECT_LT((u.lambda - lambda).norm(), 1e-6 * std::max(1.0, lambda.norm())) << seed;
  }
}

TEST(Uzawa, DelassusFormMatchesExplicitIteration) {
  const Instance s = random_instance(9, 10, 3);
  const VecX w = VecX::Constant(3, 2.0);
  const VecX lambda = (VecX(3) << 0.3, -0.1, 0.7).finished();
  const auto [dv, next] = uzawa_step(s.a.sparseView(), s.b, s.j.sparseView(), w, s.g, lambda);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> j = s.j.sparseView();
  const DelassusSolver solver([&](const VecX& r) { return VecX(s.a.ldlt().solve(r)); }, s.b, j);
  const std::vector<char> all(3, 1);
  EXPECT_LT((solver.velocity(lambda, all, w, s.g) - dv).norm(), 1e-10 * dv.norm());
  EXPECT_LT((solver.constraint_velocity(lambda, all, w, s.g) - s.j * dv).norm(), 1e-10 * dv.norm());
  EXPECT_LT((lambda - w.cwiseProduct(s.j * dv - s.g) - next).norm(), 1e-10);
}

TEST(Uzawa, CapRaisesWithResidual) {
  const Instance s = random_instance(3, 8, 3);
  try {
    (void)uzawa_solve_bilateral(s.a.sparseView(), s.b, s.j.sparseView(), VecX::Constant(3, 1e-6), s.g, 1e-14, 3);
    FAIL() << "expected ContactSolverFailure";
  } catch (const ContactSolverFailure& e) {
    EXPECT_EQ(e.iterations(), 3);
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Friction, ProjectionOntoCone) {
  EXPECT_EQ(friction_projection(Vec3(2.0, 0.3, 0.4), 0.5, 2.0, true), Vec3(2.0, 0.3, 0.4));
  const Vec3 p = friction_projection(Vec3(2.0, 3.0, 4.0), 0.5, 2.0, true);
  EXPECT_NEAR(p.tail<2>().norm(), 1.0, 1e-15);
  EXPECT_NEAR(p[1] / p[2], 0.75, 1e-15);
  EXPECT_EQ(friction_projection(Vec3(-1.0, 3.0, 4.0), 0.5, 2.0, true), Vec3::Zero());
}

TEST(Friction, ClosedFormStates) {
  ContactParameters prm;
  prm.puncture_strength = 10.0;
  prm.mu_surface = 0.5;
  prm.mu_shaft = 0.5;
  prm.shaft_normal_force = 0.2;
  ConstraintPoint s;
  s.kind = ConstraintKind::kSurfacePuncture;
  EXPECT_EQ(classify_state(s, Vec3(11.0, 0.0, 0.0), prm), ContactState::kCut);
  EXPECT_EQ(classify_state(s, Vec3(4.0, 1.0, 0.0), prm), ContactState::kStick);
  EXPECT_EQ(classify_state(s, Vec3(4.0, 3.0, 0.0), prm), ContactState::kSlip);
  EXPECT_EQ(classify_state(s, Vec3(-1.0, 0.0, 0.0), prm), ContactState::kInactive);
  ConstraintPoint t;
  t.kind = ConstraintKind::kNeedleTip;
  EXPECT_EQ(classify_state(t, Vec3(9.0, 1.0, 0.0), prm), ContactState::kStick);
  EXPECT_EQ(classify_state(t, Vec3(10.6, 1.0, 0.0), prm), ContactState::kCut);
  ConstraintPoint h;
  h.kind = ConstraintKind::kShaft;
  EXPECT_EQ(classify_state(h, Vec3(0.05, 0.0, 0.0), prm), ContactState::kStick);
  EXPECT_EQ(classify_state(h, Vec3(-0.2, 0.1, 0.0), prm), ContactState::kSlip);
}

// Converged friction points lie in the cone and satisfy complementarity.
TEST(Friction, SurfacePointConeAndComplementarity) {
  for (const Vec3 push : {Vec3(-5.0, 3.0, 0.0), Vec3(-5.0, 6.0, -2.0), Vec3(2.0, 1.0, 0.0)}) {
    PointProblem pp(ConstraintKind::kSurfacePuncture);
    ContactSolveReport rep;
    const VecX dv = pp.solve(push, &rep);
    ASSERT_TRUE(rep.converged);
    const ConstraintPoint& p = pp.set.points.front();
    const Vec3 u = pp.relative(dv);
    const double mu = pp.set.params.mu_surface;
    const double ln = p.lambda[0];
    const Eigen::Vector2d lt = p.lambda.tail<2>();
    const Eigen::Vector2d ut = u.tail<2>();
    EXPECT_GE(ln, -1e-8);
    EXPECT_GE(u[0], -1e-8);
    EXPECT_LE(std::abs(ln * u[0]), 1e-8);
    EXPECT_LE(lt.norm(), mu * ln + 1e-8);
    // Either sticking, or sliding on the cone boundary against the slip.
    if (ut.norm() > 1e-8) {
      EXPECT_NEAR(lt.norm(), mu * ln, 1e-8);
      EXPECT_NEAR(lt.dot(ut), -lt.norm() * ut.norm(), 1e-8);
    }
  }
}

TEST(Friction, ShaftStickAndSlideAtRest) {
  for (const double push : {0.05, 1.0, -1.0}) {
    PointProblem pp(ConstraintKind::kShaft);
    pp.set.params.mu_shaft = 0.5;
    pp.set.params.shaft_normal_force = 0.2;
    ContactSolveReport rep;
    const VecX dv = pp.solve(Vec3(push, 0.0, 0.0), &rep);
    ASSERT_TRUE(rep.converged);
    const ConstraintPoint& p = pp.set.points.front();
    const double limit = 0.5 * (p.lambda.tail<2>().norm() + 0.2);
    const double u = pp.relative(dv)[0];
    EXPECT_LE(std::abs(p.lambda[0]), limit + 1e-8);
    if (std::abs(u) > 1e-8) {
      EXPECT_EQ(p.state, ContactState::kSlip);
      EXPECT_NEAR(p.lambda[0], -std::copysign(limit, u), 1e-8);
    } else {
      EXPECT_EQ(p.state, ContactState::kStick);
    }
    EXPECT_EQ(p.state, std::abs(push) > 0.1 ? ContactState::kSlip : ContactState::kStick);
  }
}

TEST(Friction, ShaftSlidesAgainstBaseMotion) {
  PointProblem pp(ConstraintKind::kShaft);
  pp.set.params.mu_shaft = 0.5;
  pp.set.params.shaft_normal_force = 0.2;
  pp.set.motion = 1;
  ContactSolveReport rep;
  (void)pp.solve(Vec3(0.01, 0.0, 0.0), &rep);
  EXPECT_NEAR(pp.set.points.front().lambda[0], 0.1, 1e-12);
}

TEST(Puncture, BreaksOnConvergedForce) {
  PointProblem pp(ConstraintKind::kSurfacePuncture);
  pp.set.params.puncture_strength = 4.0;
  ContactSolveReport rep;
  (void)pp.solve(Vec3(-5.0, 0.0, 0.0), &rep);
  const ConstraintPoint& p = pp.set.points.front();
  EXPECT_TRUE(p.broke_through);
  EXPECT_EQ(p.state, ContactState::kCut);
  // The breaking step reports the full force.
  EXPECT_NEAR(p.lambda[0], 5.0, 1e-6);
}
