#pragma once

// Needle-tissue coupling through point constraints solved by an augmented
// Lagrangian (Uzawa) iteration.
//
// Sign conventions. Every constraint row r has a unit direction d_r and maps
// velocities to a relative velocity u_r = d_r . (v_needle - v_tissue), so
// J = [J_tissue J_needle] with J_needle = +d N_needle and J_tissue = -d N_tissue.
// Multipliers are forces on the needle along d_r: the coupled step solves
//
//   A dv = b + J^T lambda,
//
// and a row in equality mode enforces J dv = g, where g = -J v - gap / tau
// closes the positional gap within the step. Each iteration solves
//
//   (A + J_E^T W J_E) dv = b + J^T lambda + J_E^T W g_E,
//   lambda_E <- lambda_E - W (J_E dv - g_E),
//
// over the rows E currently in equality mode; rows in force mode carry a
// multiplier prescribed by the friction or cutting law.
//
// Frames: the first axis n of a surface point is the outward surface normal,
// approximated by the reversed insertion axis. Tip and shaft points use
// n = -axis (along the shaft) and two transverse axes t1, t2.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "hexadapt/beam.hpp"
#include "hexadapt/tissue.hpp"

namespace hexadapt {

enum class ConstraintKind { kSurfacePuncture, kNeedleTip, kShaft };
enum class ContactState { kInactive, kStick, kSlip, kCut };
enum class RowMode { kInactive, kEquality, kForce };

const char* to_string(ConstraintKind kind);
const char* to_string(ContactState state);

struct TissueAnchor {
  ElemId element;
  NaturalCoord coord;
};

struct ContactParameters {
  double mu_surface = 0.8;
  double mu_shaft = 0.5;
  /// Puncture strength lambda_n0 (force).
  double puncture_strength = 10.0;
  /// Cutting strength at the tip; defaults to the puncture strength.
  std::optional<double> cut_strength;
  /// Distance between shaft points; <= 0 selects half a needle segment.
  double shaft_spacing = 0.0;
  /// Normal force pressing the tissue onto the shaft at each shaft point,
  /// added to the transverse multiplier magnitude in the friction law.
  double shaft_normal_force = 0.0;
  /// Distance ahead of the tip at which surface contact is detected.
  double contact_tolerance = 1e-6;
  /// Penalty weight scale c in w = c * mean diag(A) over the row support.
  double penalty_scale = 1.0;
  double tolerance = 1e-6;
  int max_iterations = 200;

  [[nodiscard]] double cutting() const { return cut_strength.value_or(puncture_strength); }
  void validate() const;
};

struct ConstraintPoint {
  ConstraintKind kind = ConstraintKind::kSurfacePuncture;
  ContactState state = ContactState::kStick;
  /// Columns (n, t1, t2).
  Mat3 frame = Mat3::Identity();
  TissueAnchor anchor;
  /// Rest arc-length of the needle point.
  double arc = 0.0;
  /// Multipliers along (n, t1, t2).
  Vec3 lambda = Vec3::Zero();
  std::array<RowMode, 3> modes{RowMode::kEquality, RowMode::kEquality, RowMode::kEquality};
  /// Set at the end of a solve when the surface gives way or the tip cuts;
  /// the point is released at the next detection.
  bool broke_through = false;
};

/// One row of J with its bookkeeping.
struct ConstraintRow {
  std::size_t point = 0;
  int direction = 0;  // 0 = n, 1 = t1, 2 = t2
  double weight = 0.0;
  double target = 0.0;    // g
  double velocity = 0.0;  // current relative velocity J v
  double gap = 0.0;
};

struct ConstraintJacobian {
  Eigen::SparseMatrix<double, Eigen::RowMajor> j;  // rows x (tissue + needle dofs)
  std::vector<ConstraintRow> rows;
};

struct ConstraintSet {
  std::vector<ConstraintPoint> points;
  ContactParameters params;
  bool inside = false;         // the tip has punctured the surface
  Vec3 entry = Vec3::Zero();   // tip position at puncture
  double dropped_depth = 0.0;  // depth of the last shaft point
  bool tip_released = false;   // a broken point was removed; the tip re-anchors next step
  /// Base motion along the axis (+1 advancing, -1 retracting, 0 at rest).
  /// While the base moves, shaft points slide against it.
  int motion = 0;

  [[nodiscard]] std::size_t count(ConstraintKind kind) const;
};

/// Rows per point in the current states: surface 3 (or 0 once broken),
/// tip 3, shaft 2 when sliding and 3 when sticking.
std::size_t row_count(const ConstraintPoint& p);

/// Coulomb projection of the tangential multipliers onto the cone of
/// radius mu * normal; a negative normal on a unilateral point zeroes all.
Vec3 friction_projection(const Vec3& lambda, double mu, double normal, bool unilateral);

/// State update from trial multipliers (closed-form laws):
///   surface: penetrate iff lambda_n > lambda_n0; stick iff |lambda_t| < mu lambda_n.
///   tip: stick iff lambda_n < mu |lambda_t| + cut strength, else cut.
///   shaft: stick iff |lambda_n| < mu (|lambda_t| + preload), else slide.
ContactState classify_state(const ConstraintPoint& p, const Vec3& lambda, const ContactParameters& params);
void classify_states(ConstraintSet& set);

struct NeedleState {
  NeedleModel model;
  VecX velocity;  // 6 per node

  explicit NeedleState(NeedleModel m);
  [[nodiscard]] Vec3 axis() const;
};

/// Creates, converts and retires constraint points from the current
/// configuration; `advancing` tells whether the needle base moves forward.
void detect_and_update_constraints(TissueBody& tissue, const NeedleState& needle, ConstraintSet& set,
                                   bool advancing);

/// Moves anchors of refined elements into the children containing them.
void reanchor_after_refinement(TissueBody& tissue, ConstraintSet& set);

/// True if coarsening `parent` would invalidate an anchor.
bool anchors_block_coarsening(const HexMesh& mesh, const ConstraintSet& set, ElemId parent);

/// Builds J over [tissue reduced dofs | needle dofs] with targets g and
/// penalty weights from the diagonal of A. Columns of `fixed` dofs are
/// dropped and their prescribed increments moved into g.
ConstraintJacobian assemble_jacobians(TissueBody& tissue, const NeedleState& needle,
                                      const ConstraintSet& set, double tau, const VecX& diag_a,
                                      const std::vector<char>& fixed, const VecX& prescribed);

/// Single Uzawa iteration on an explicit system: returns (dv, lambda).
std::pair<VecX, VecX> uzawa_step(const Eigen::SparseMatrix<double>& a, const VecX& b,
                                 const Eigen::SparseMatrix<double>& j, const VecX& w, const VecX& g,
                                 const VecX& lambda);

/// Iterates uzawa_step with all rows bilateral until the multiplier change
/// is below tol * max(1, |lambda|_inf). Throws ContactSolverFailure at the cap.
struct UzawaResult {
  VecX dv;
  VecX lambda;
  int iterations = 0;
  double residual = 0.0;
};
UzawaResult uzawa_solve_bilateral(const Eigen::SparseMatrix<double>& a, const VecX& b,
                                  const Eigen::SparseMatrix<double>& j, const VecX& w, const VecX& g,
                                  double tol = 1e-6, int max_iterations = 200);

/// Constraint-space form of the same iteration: A is factored once and the
/// iteration runs on J A^-1 J^T (Woodbury identity for the penalty term).
class DelassusSolver {
 public:
  using Solve = std::function<VecX(const VecX&)>;
  DelassusSolver(const Solve& solve_a, const VecX& b, const Eigen::SparseMatrix<double, Eigen::RowMajor>& j);

  /// J dv for multipliers lambda with rows `equality` penalized by w, target g.
  [[nodiscard]] VecX constraint_velocity(const VecX& lambda, const std::vector<char>& equality,
                                         const VecX& w, const VecX& g) const;
  [[nodiscard]] VecX velocity(const VecX& lambda, const std::vector<char>& equality, const VecX& w,
                              const VecX& g) const;
  [[nodiscard]] const MatX& delassus() const { return d_; }

 private:
  [[nodiscard]] VecX reduced_multiplier(const VecX& lambda, const std::vector<char>& equality,
                                        const VecX& w, const VecX& g, VecX* q_out) const;

  VecX z_;
  MatX y_;
  MatX d_;
  VecX c_;
};

struct ContactSolveReport {
  int iterations = 0;
  double residual = 0.0;
  bool converged = true;
};

/// Full contact solve for one step on A dv = b + J^T lambda with the state
/// machine of every point. Updates multipliers, modes and states in `set`
/// and returns dv. Throws ContactSolverFailure when the cap is hit.
VecX solve_contact(const DelassusSolver& solver, const ConstraintJacobian& jac, ConstraintSet& set,
                   ContactSolveReport* report = nullptr);

/// Needle backward-Euler system with the base node prescribed to move with
/// `base_velocity` (6 entries: linear, angular).
ReducedStep needle_step_system(const NeedleState& needle, double tau, const Vec6& base_velocity);

struct CoupledStepReport {
  int uzawa_iterations = 0;
  double uzawa_residual = 0.0;
  bool contact_failed = false;
  /// Constraint force on the needle along -axis (resistance is positive while inserting).
  double axial_force = 0.0;
  double tip_force = 0.0;
  double shaft_force = 0.0;
  double surface_force = 0.0;
  Vec3 force_on_needle = Vec3::Zero();
  Vec3 force_on_tissue = Vec3::Zero();
  std::size_t surface_points = 0, tip_points = 0, shaft_points = 0;
  double solve_seconds = 0.0;
};

/// One coupled step: detect, assemble, solve, update both bodies.
CoupledStepReport coupled_step(TissueBody& tissue, NeedleState& needle, ConstraintSet& set, double tau,
                               const Vec6& base_velocity);

}  // namespace hexadapt
