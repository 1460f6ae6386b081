#pragma once

// Needle model: serially linked two-node Timoshenko beams, 6 DOF per node
// (3 translations, 3 rotations), with a corotational internal force.
//
// Local beam DOF order per node: (ux, uy, uz, rx, ry, rz); the local x axis
// runs from the first to the second node. Node 0 is the needle base and the
// last node is the tip.

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include "hexadapt/corotational.hpp"

namespace hexadapt {

using Matrix12 = Eigen::Matrix<double, 12, 12>;
using Vector12 = Eigen::Matrix<double, 12, 1>;
using Quat = Eigen::Quaterniond;

inline constexpr double kTimoshenkoShearCorrection = 0.9;

/// Local 12x12 Timoshenko stiffness of a circular section (A = pi r^2,
/// I = pi r^4 / 4, J = pi r^4 / 2, kappa = 0.9).
Matrix12 beam_stiffness(double rest_length, double radius, const Material& material);

struct BeamElementMatrices {
  Matrix12 stiffness;  // local frame, evaluated at the current length
  Mat3 rotation;       // columns: local axes in world coordinates
};

struct ArcLocation {
  std::size_t segment = 0;
  double t = 0.0;  // 0 at the segment's first node, 1 at its second
};

class NeedleModel {
 public:
  /// Straight needle from `base` along `direction` (normalized internally).
  static NeedleModel straight(const Vec3& base, const Vec3& direction, double length,
                              int segments, double radius, const Material& material);

  [[nodiscard]] std::size_t num_nodes() const { return positions_.size(); }
  [[nodiscard]] std::size_t num_segments() const { return positions_.size() - 1; }
  [[nodiscard]] std::size_t num_dofs() const { return 6 * num_nodes(); }
  [[nodiscard]] double radius() const { return radius_; }
  [[nodiscard]] const Material& material() const { return material_; }
  [[nodiscard]] double rest_length(std::size_t segment) const;
  [[nodiscard]] double total_rest_length() const;

  [[nodiscard]] const Vec3& position(std::size_t i) const { return positions_[i]; }
  [[nodiscard]] Mat3 orientation(std::size_t i) const { return orientations_[i].toRotationMatrix(); }
  [[nodiscard]] const Vec3& rest_position(std::size_t i) const { return rest_positions_[i]; }
  [[nodiscard]] const Vec3& tip() const { return positions_.back(); }
  [[nodiscard]] const Vec3& base() const { return positions_.front(); }

  void set_position(std::size_t i, const Vec3& p) { positions_[i] = p; }
  void set_orientation(std::size_t i, const Mat3& r);

  /// x += tau * v for translations, q <- exp(tau w) q for rotations.
  /// `velocity` holds 6 entries per node (linear, angular in world frame).
  void advance(const VecX& velocity, double tau);

  /// Rigidly transforms the current configuration: x -> Q x + d.
  void apply_rigid_motion(const Mat3& rotation, const Vec3& translation);

  /// Rest arc-length (0 at base) to segment/parameter; clamps to the needle.
  [[nodiscard]] ArcLocation locate_arc(double s) const;
  [[nodiscard]] Vec3 position_at(double s) const;
  /// Unit tangent of the segment containing arc-length s.
  [[nodiscard]] Vec3 tangent_at(double s) const;
  /// Arc-length of the needle point closest to `p` (current configuration).
  [[nodiscard]] double project(const Vec3& p) const;

  /// Current corotational frame and local stiffness of one segment.
  [[nodiscard]] BeamElementMatrices segment_frame(std::size_t segment) const;

  /// Local DOF vector (node 0 pinned at the frame origin) of one segment.
  [[nodiscard]] Vector12 local_displacement(std::size_t segment, const Mat3& frame) const;

 private:
  std::vector<Vec3> rest_positions_;
  std::vector<Quat> rest_orientations_;
  std::vector<Mat3> rest_frames_;  // per segment
  std::vector<Vec3> positions_;
  std::vector<Quat> orientations_;
  double radius_ = 0.0;
  Material material_;
};

/// Generalized internal force (6 per node: force then moment).
VecX needle_corotational_force(const NeedleModel& model);

/// Assembled corotational tangent R K R^T (frozen frames).
Eigen::SparseMatrix<double> needle_stiffness(const NeedleModel& model);

/// Lumped mass: 6 entries per node (translational mass, rotational inertia).
VecX needle_lumped_mass(const NeedleModel& model);

}  // namespace hexadapt
