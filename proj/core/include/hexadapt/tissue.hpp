#pragma once

// Deformable hexahedral body: owns the mesh, nodal state, cached element
// matrices, boundary data and the refinement history, and turns them into
// reduced linear systems for a static solve or a backward-Euler step.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hexadapt/adaptivity.hpp"
#include "hexadapt/corotational.hpp"
#include "hexadapt/error_estimator.hpp"
#include "hexadapt/integrator.hpp"
#include "hexadapt/mesh.hpp"

namespace hexadapt {

using PointPredicate = std::function<bool(const Vec3&)>;

/// Zero-displacement support on the selected components of every non-slave
/// node whose rest position satisfies `where`.
struct DisplacementSupport {
  PointPredicate where;
  std::array<bool, 3> components{true, true, true};
};

/// Uniform traction on every element face whose four rest corners satisfy
/// `on_face`.
struct TractionLoad {
  PointPredicate on_face;
  Vec3 traction = Vec3::Zero();
};

/// Linear reduced system after hanging-node condensation and Dirichlet
/// elimination. Fixed rows are unit rows with b equal to the prescribed value.
struct ReducedStep {
  SparseMatrix a;
  VecX b;
  std::vector<char> fixed;  // per reduced dof
};

struct AdaptOptions {
  double theta = kDefaultMarkingFraction;
  std::string refine_template = "2x2x2";
  int max_level = 2;
  /// Refinement stops once the relative error is at or below this value.
  std::optional<double> target_relative_error;
  /// Trends compare against the unloaded state instead of the previous
  /// estimate (static problems loaded from rest).
  bool from_rest = false;
  /// Stress below this fraction of Young's modulus counts as unloaded and
  /// gives no trend, so round-off in a body at rest does not drive refinement.
  double stress_floor = 1e-6;
};

struct AdaptReport {
  std::size_t refined = 0;
  std::size_t coarsened = 0;
  double relative_error = 0.0;
  bool relative_error_defined = false;
  double max_error = 0.0;
  std::vector<RefinementRecord> new_records;
  std::vector<ElemId> coarsened_parents;
};

class TissueBody {
 public:
  TissueBody(HexMesh mesh, Material material, bool corotational = true);

  [[nodiscard]] const HexMesh& mesh() const { return mesh_; }
  [[nodiscard]] const Material& material() const { return material_; }
  [[nodiscard]] bool corotational() const { return corotational_; }

  [[nodiscard]] const NodalField& positions() const { return x_; }
  [[nodiscard]] const NodalField& velocities() const { return v_; }
  void set_position(NodeId n, const Vec3& p);
  void set_velocity(NodeId n, const Vec3& v);

  void add_support(DisplacementSupport support);
  void add_traction(TractionLoad load);

  /// Current hanging-node reduction (rebuilt lazily after topology changes).
  const TransformationMatrix& reduction();
  [[nodiscard]] Eigen::Index num_reduced_dofs();
  [[nodiscard]] std::size_t num_dofs() const { return 3 * mesh_.num_live_nodes(); }

  /// Flattens a nodal field over live nodes (full space).
  [[nodiscard]] VecX pack(const NodalField& field);

  /// Freezes element rotations at the current configuration.
  void update_rotations();

  /// Assembled full-space matrices at the frozen rotations.
  [[nodiscard]] SparseMatrix stiffness();
  [[nodiscard]] VecX lumped_mass();
  [[nodiscard]] VecX internal_force();
  [[nodiscard]] VecX external_force();

  /// Static small-strain solve K u = f with supports; sets x = x0 + u, v = 0.
  SolveReport solve_static(const SolverOptions& options = {});

  /// Reduced backward-Euler system for the next step (updates rotations).
  ReducedStep build_step(double tau, const VecX* extra_force = nullptr);

  /// Applies a reduced velocity increment: v += T dv, x += tau v, then snaps slaves.
  void apply_step(const VecX& dv_reduced, double tau);

  /// Free step without contact; CG on the reduced system.
  SolveReport step(double tau, const SolverOptions& options = {});

  /// Reduced-dof weights of a material point (element, natural coordinate),
  /// as (reduced node index, weight) pairs after slave composition.
  std::vector<std::pair<Eigen::Index, double>> point_weights(ElemId e, const NaturalCoord& c);
  [[nodiscard]] Vec3 point_position(ElemId e, const NaturalCoord& c) const;
  [[nodiscard]] Vec3 point_velocity(ElemId e, const NaturalCoord& c) const;

  /// Refines e, interpolating the state of created nodes.
  const RefinementRecord& refine(ElemId e, const RefinementTemplate& tmpl);
  /// Undoes the refinement of `parent`.
  void coarsen(ElemId parent);
  [[nodiscard]] const RefinementHistory& history() const { return history_; }

  /// Moves slave nodes onto the interpolation of their masters.
  void snap_slaves();

  /// Estimate, mark and adapt once. Parents for which `blocked` returns true
  /// are not coarsened.
  AdaptReport adapt(const AdaptOptions& options,
                    const std::function<bool(ElemId)>& blocked = nullptr);

  /// Error estimate at the current state.
  ErrorEstimate estimate();

 private:
  void ensure_capacity();
  void invalidate_topology();
  const Matrix24& element_stiffness_cached(ElemId e);
  Vector24 element_positions(ElemId e) const;

  HexMesh mesh_;
  Material material_;
  bool corotational_;
  NodalField x_;
  NodalField v_;
  std::vector<DisplacementSupport> supports_;
  std::vector<TractionLoad> tractions_;
  // Element stiffness depends only on the rest shape up to translation, so
  // matrices are shared between congruent elements.
  std::map<std::array<long long, 21>, std::unique_ptr<Matrix24>> k_shapes_;
  std::vector<const Matrix24*> k_cache_;
  std::vector<Mat3> rotations_;
  ElementStress previous_stress_;
  std::vector<char> has_previous_;
  RefinementHistory history_;
  std::optional<TransformationMatrix> reduction_;
  std::vector<int> slave_index_;  // by node slot, -1 if not a slave
};

}  // namespace hexadapt
