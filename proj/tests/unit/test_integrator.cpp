#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "hexadapt/integrator.hpp"
#include "hexadapt/tissue.hpp"

using namespace hexadapt;

namespace {

SparseMatrix sparse(const MatX& d) { return d.sparseView(); }

// Three masses on springs, the first one tied to the ground.
MatX chain_stiffness() {
  MatX k(3, 3);
  k << 3, -1, 0, -1, 2, -1, 0, -1, 1;
  return 100.0 * k;
}

}  // namespace

TEST(Integrator, AssemblesBackwardEulerSystem) {
  const MatX k = chain_stiffness();
  const MatX m = VecX::Constant(3, 2.0).asDiagonal();
  const MatX c = 0.1 * m + 0.01 * k;
  const VecX f = (VecX(3) << 1.0, -2.0, 0.5).finished();
  const VecX v = (VecX(3) << 0.3, 0.0, -0.1).finished();
  const double tau = 0.02;
  const SteppingSystem s = assemble_step(sparse(m), sparse(c), sparse(k), f, v, tau);
  EXPECT_LT((MatX(s.a) - (m + tau * c + tau * tau * k)).norm(), 1e-12);
  EXPECT_LT((s.b - (tau * f - tau * tau * k * v)).norm(), 1e-12);
}

// With damping the stepped solution settles at K u = f_ext.
TEST(Integrator, StaticLimit) {
  const MatX k = chain_stiffness();
  const MatX m = VecX::Constant(3, 1.0).asDiagonal();
  const MatX c = 5.0 * m + 0.02 * k;
  const VecX f_ext = (VecX(3) << 0.0, 1.0, 2.0).finished();
  SystemState s{VecX::Zero(3), VecX::Zero(3), 0.0, 0.05};
  for (int i = 0; i < 2000; ++i) {
    const VecX f_net = f_ext - k * s.x - c * s.v;
    const SteppingSystem sys = assemble_step(sparse(m), sparse(c), sparse(k), f_net, s.v, s.tau);
    SolverOptions opt;
    opt.tolerance = 1e-14;
    s = update_state(s, solve_reduced(sys, opt));
  }
  const VecX u = k.ldlt().solve(f_ext);
  EXPECT_LT((s.x - u).norm(), 1e-8 * u.norm());
  EXPECT_NEAR(s.t, 2000 * 0.05, 1e-9);
}

TEST(Integrator, DirichletEliminationKeepsOtherEquations) {
  const MatX a = chain_stiffness() + MatX::Identity(3, 3);
  const VecX b = (VecX(3) << 1.0, 2.0, 3.0).finished();
  SteppingSystem sys;
  sys.a = sparse(a);
  sys.b = b;
  sys.dirichlet.add(1, 0.25);
  SolverOptions opt;
  opt.tolerance = 1e-14;
  const VecX x = solve_reduced(sys, opt);
  EXPECT_DOUBLE_EQ(x[1], 0.25);
  const VecX r = a * x - b;
  EXPECT_NEAR(r[0], 0.0, 1e-10);
  EXPECT_NEAR(r[2], 0.0, 1e-10);
}

TEST(Integrator, ReportsFailureWithResidual) {
  const MatX a = chain_stiffness() + MatX::Identity(3, 3);
  SteppingSystem sys;
  sys.a = sparse(a);
  sys.b = VecX::Ones(3);
  SolverOptions opt;
  opt.tolerance = 1e-16;
  opt.max_iterations = 1;
  try {
    (void)solve_reduced(sys, opt);
    FAIL() << "expected SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_GT(e.residual(), 0.0);
    EXPECT_EQ(e.iterations(), 1);
  }
}

TEST(Integrator, FactorizedSolveMatchesDense) {
  const MatX a = chain_stiffness() + MatX::Identity(3, 3);
  const FactorizedSystem f(sparse(a));
  const VecX b = (VecX(3) << 1.0, -1.0, 2.0).finished();
  EXPECT_LT((a * f.solve(b) - b).norm(), 1e-12);
}

// A free, undamped body keeps its linear momentum: internal forces cancel.
TEST(Integrator, FreeBodyConservesMomentum) {
  HexMesh mesh = build_grid(Vec3::Zero(), Vec3(1.0, 0.5, 0.5), {2, 1, 1});
  TissueBody body(mesh, Material{1e3, 0.3, 2.0, 0.0, 0.0});
  for (NodeId n : body.mesh().live_nodes()) {
    const Vec3 p = body.mesh().rest_position(n);
    body.set_velocity(n, Vec3(0.1 + p.x(), -0.2 * p.y(), 0.05 * p.z() * p.x()));
  }
  auto momentum = [&] {
    const VecX m = body.lumped_mass();
    const VecX v = body.pack(body.velocities());
    Vec3 p = Vec3::Zero();
    for (Eigen::Index i = 0; i < v.size(); i += 3) p += m[i] * v.segment<3>(i);
    return p;
  };
  const Vec3 p0 = momentum();
  SolverOptions opt;
  opt.tolerance = 1e-14;
  for (int i = 0; i < 20; ++i) body.step(0.01, opt);
  EXPECT_LT((momentum() - p0).norm(), 1e-10 * p0.norm());
}
