#pragma once

// Backward-Euler stepping. With K and C the assembled stiffness and damping
// (so that df/dx = -K and df/dv = -C), one linearized step solves
//
//   (M + tau C + tau^2 K) dv = tau f(x, v) - tau^2 K v,
//   f(x, v) = f_ext - f_int(x) - C v,
//
// followed by v <- v + dv, x <- x + tau v. The system matrix is SPD.

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseCholesky>

#include "hexadapt/common.hpp"

namespace hexadapt {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct SystemState {
  VecX x;
  VecX v;
  double t = 0.0;
  double tau = 1e-2;
};

/// Prescribed values for individual unknowns (row/column elimination).
struct DirichletSet {
  std::vector<std::pair<Eigen::Index, double>> values;

  void add(Eigen::Index dof, double value) { values.emplace_back(dof, value); }
  [[nodiscard]] bool empty() const { return values.empty(); }
};

struct SteppingSystem {
  SparseMatrix a;
  VecX b;
  /// Optional full -> reduced map u_f = T u_r (hanging-node condensation).
  std::optional<SparseMatrix> reduction;
  /// Prescribed unknowns, indexed in the reduced space when a reduction is set.
  DirichletSet dirichlet;
};

struct SolverOptions {
  enum class Preconditioner { kJacobi, kIncompleteCholesky };
  double tolerance = 1e-8;
  /// <= 0 means 10 * n.
  int max_iterations = 0;
  Preconditioner preconditioner = Preconditioner::kJacobi;
};

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Builds A = M + tau C + tau^2 K and b = tau f_net - tau^2 K v.
SteppingSystem assemble_step(const SparseMatrix& mass, const SparseMatrix& damping,
                             const SparseMatrix& stiffness, const VecX& f_net, const VecX& v,
                             double tau);

/// Row/column elimination with unit diagonal. b is corrected for the
/// eliminated columns so the remaining equations are unchanged.
void apply_dirichlet(SparseMatrix& a, VecX& b, const DirichletSet& dirichlet);

/// Reduces (if requested), eliminates Dirichlet unknowns, solves with
/// preconditioned conjugate gradients and expands back to the full space.
/// Throws SolverFailure carrying the residual when the tolerance is not met.
VecX solve_reduced(const SteppingSystem& system, const SolverOptions& options = {},
                   SolveReport* report = nullptr);

/// v <- v + dv; x <- x + tau v.
SystemState update_state(const SystemState& state, const VecX& dv);

/// Sparse Cholesky factorization reused across several right-hand sides.
/// Systems of at least `kSupernodalThreshold` unknowns use a supernodal
/// factorization when the library was built with CHOLMOD.
class FactorizedSystem {
 public:
  static constexpr Eigen::Index kSupernodalThreshold = 3000;

  explicit FactorizedSystem(const SparseMatrix& a);
  ~FactorizedSystem();
  FactorizedSystem(FactorizedSystem&&) noexcept;
  FactorizedSystem& operator=(FactorizedSystem&&) noexcept;

  [[nodiscard]] VecX solve(const VecX& b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SparseMatrix diagonal_matrix(const VecX& d);

}  // namespace hexadapt
