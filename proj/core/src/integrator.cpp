#include "hexadapt/integrator.hpp"

#ifdef HEXADAPT_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include <algorithm>

#include <Eigen/IterativeLinearSolvers>

#include "hexadapt/adaptivity.hpp"

namespace hexadapt {

SteppingSystem assemble_step(const SparseMatrix& mass, const SparseMatrix& damping,
                             const SparseMatrix& stiffness, const VecX& f_net, const VecX& v,
                             double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("assemble_step: tau must be positive");
  const Eigen::Index n = mass.rows();
  if (mass.cols() != n || damping.rows() != n || stiffness.rows() != n || f_net.size() != n ||
      v.size() != n) {
    throw InvalidArgument("assemble_step: dimension mismatch");
  }
  SteppingSystem s;
  s.a = mass + tau * damping + (tau * tau) * stiffness;
  s.b = tau * f_net - (tau * tau) * (stiffness * v);
  return s;
}

void apply_dirichlet(SparseMatrix& a, VecX& b, const DirichletSet& dirichlet) {
  if (dirichlet.empty()) return;
  const Eigen::Index n = a.rows();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  VecX prescribed = VecX::Zero(n);
  for (const auto& [dof, value] : dirichlet.values) {
    if (dof < 0 || dof >= n) throw InvalidArgument("apply_dirichlet: dof out of range");
    fixed[static_cast<std::size_t>(dof)] = 1;
    prescribed[dof] = value;
  }
  b.noalias() -= a * prescribed;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(a.nonZeros()));
  for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
      if (fixed[static_cast<std::size_t>(it.row())] || fixed[static_cast<std::size_t>(it.col())]) continue;
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (fixed[static_cast<std::size_t>(i)]) {
      trips.emplace_back(i, i, 1.0);
      b[i] = prescribed[i];
    }
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  a = std::move(out);
}

namespace {

template <class Solver>
VecX run_cg(Solver& cg, const SparseMatrix& a, const VecX& b, const SolverOptions& options,
            SolveReport* report) {
  const Eigen::Index n = a.rows();
  cg.setTolerance(options.tolerance);
  cg.setMaxIterations(options.max_iterations > 0 ? options.max_iterations
                                                 : static_cast<int>(std::max<Eigen::Index>(10 * n, 1)));
  cg.compute(a);
  if (cg.info() != Eigen::Success) throw SolverFailure("solve_reduced: preconditioner setup failed", 1.0, 0);
  VecX x = cg.solve(b);
  const double bn = b.norm();
  const double rel = (a * x - b).norm() / bn;
  if (report) {
    report->iterations = static_cast<int>(cg.iterations());
    report->relative_residual = rel;
  }
  // Eigen's estimate is recurrence-based; accept small round-off above tol.
  if (!(rel <= 10.0 * options.tolerance) || !x.allFinite()) {
    throw SolverFailure("solve_reduced: conjugate gradient did not converge", rel,
                        static_cast<int>(cg.iterations()));
  }
  return x;
}

}  // namespace

VecX solve_reduced(const SteppingSystem& system, const SolverOptions& options, SolveReport* report) {
  SparseMatrix a;
  VecX b;
  if (system.reduction) {
    auto reduced = reduce_system(system.a, system.b, *system.reduction);
    a = std::move(reduced.first);
    b = std::move(reduced.second);
  } else {
    a = system.a;
    b = system.b;
  }
  apply_dirichlet(a, b, system.dirichlet);
  VecX x;
  if (b.norm() == 0.0) {
    x = VecX::Zero(b.size());
    if (report) *report = {};
  } else if (options.preconditioner == SolverOptions::Preconditioner::kIncompleteCholesky) {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                             Eigen::IncompleteCholesky<double>>
        cg;
    x = run_cg(cg, a, b, options, report);
  } else {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    x = run_cg(cg, a, b, options, report);
  }
  // Elimination makes prescribed entries exact; enforce bitwise.
  for (const auto& [dof, value] : system.dirichlet.values) x[dof] = value;
  if (system.reduction) return expand_solution(*system.reduction, x);
  return x;
}

SystemState update_state(const SystemState& state, const VecX& dv) {
  if (dv.size() != state.v.size() || state.x.size() != state.v.size()) {
    throw InvalidArgument("update_state: dimension mismatch");
  }
  SystemState next = state;
  next.v = state.v + dv;
  next.x = state.x + state.tau * next.v;
  next.t = state.t + state.tau;
  return next;
}

struct FactorizedSystem::Impl {
  Eigen::SimplicialLDLT<SparseMatrix> simplicial;
#ifdef HEXADAPT_HAVE_CHOLMOD
  Eigen::CholmodSupernodalLLT<SparseMatrix> supernodal;
  bool use_supernodal = false;
#endif
};

FactorizedSystem::FactorizedSystem(const SparseMatrix& a) : impl_(std::make_unique<Impl>()) {
  Eigen::ComputationInfo info = Eigen::Success;
#ifdef HEXADAPT_HAVE_CHOLMOD
  impl_->use_supernodal = a.rows() >= kSupernodalThreshold;
  if (impl_->use_supernodal) {
    impl_->supernodal.compute(a);
    info = impl_->supernodal.info();
  }
  if (!impl_->use_supernodal)
#endif
  {
    impl_->simplicial.compute(a);
    info = impl_->simplicial.info();
  }
  if (info != Eigen::Success) {
    throw SolverFailure("factorization failed (matrix not positive definite?)", 1.0, 0);
  }
}

FactorizedSystem::~FactorizedSystem() = default;
FactorizedSystem::FactorizedSystem(FactorizedSystem&&) noexcept = default;
FactorizedSystem& FactorizedSystem::operator=(FactorizedSystem&&) noexcept = default;

VecX FactorizedSystem::solve(const VecX& b) const {
#ifdef HEXADAPT_HAVE_CHOLMOD
  if (impl_->use_supernodal) return impl_->supernodal.solve(b);
#endif
  return impl_->simplicial.solve(b);
}

SparseMatrix diagonal_matrix(const VecX& d) {
  SparseMatrix m(d.size(), d.size());
  m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) m.insert(i, i) = d[i];
  m.makeCompressed();
  return m;
}

}  // namespace hexadapt
