#pragma once

// Zienkiewicz-Zhu recovery-based error estimation.
//
// Raw stresses are sampled at element centers; each node with a sufficient
// patch fits P = [1 x y z xy yz zx xyz] by least squares in patch-scaled
// coordinates. The energy-norm distance between the raw (constant per element)
// and the recovered (trilinear) field drives marking.

#include <optional>
#include <span>
#include <vector>

#include "hexadapt/corotational.hpp"
#include "hexadapt/mesh.hpp"

namespace hexadapt {

inline constexpr double kDefaultMarkingFraction = 0.3;

/// Per-element-slot storage (indexed by ElemId::index()).
using ElementStress = std::vector<Vec6>;
/// Per-node-slot storage (indexed by NodeId::index()).
using NodalStress = std::vector<Vec6>;

/// Stress at the element center. With `corotated` the strain is measured in
/// the element's rotated frame and the stress rotated back to world axes;
/// otherwise plain small-strain from u = x - x0.
Vec6 center_stress(const HexMesh& mesh, ElemId e, const Material& material,
                   const NodalField& positions, bool corotated = true);

/// Center stresses of every live element.
ElementStress center_stresses(const HexMesh& mesh, const Material& material,
                              const NodalField& positions, bool corotated = true);

/// Least-squares fit of P to stress samples, coordinates mapped to [-1, 1]
/// over the sample bounding box.
class StressPolynomial {
 public:
  /// nullopt for fewer than 8 samples or an ill-conditioned normal matrix.
  static std::optional<StressPolynomial> fit(std::span<const Vec3> points,
                                             std::span<const Vec6> samples);
  [[nodiscard]] Vec6 evaluate(const Vec3& p) const;
  [[nodiscard]] const Eigen::Matrix<double, 8, 6>& coefficients() const { return coeffs_; }

  static Eigen::Matrix<double, 8, 1> basis(const Vec3& scaled);

 private:
  Vec3 center_ = Vec3::Zero();
  Vec3 half_extent_ = Vec3::Ones();
  Eigen::Matrix<double, 8, 6> coeffs_ = Eigen::Matrix<double, 8, 6>::Zero();
};

/// Patch polynomial of `node` from the centers of its live elements.
std::optional<StressPolynomial> node_patch_polynomial(const HexMesh& mesh, NodeId node,
                                                      const ElementStress& center);

/// Recovered stress at one node. Falls back to the nearest node owning a valid
/// patch; throws EstimatorFailure when no such node is reachable.
Vec6 spr_recover(const HexMesh& mesh, NodeId node, const ElementStress& center);

struct RecoveredStressField {
  NodalStress nodal;
  ElementStress center;
  std::size_t fallback_nodes = 0;
};

RecoveredStressField recover_stress_field(const HexMesh& mesh, const ElementStress& center);

/// sqrt of the 2x2x2 Gauss integral of (s_h - s_s)^T C (s_h - s_s) det J, where
/// C is the compliance and s_s is interpolated from the nodal values.
double element_error(const CornerPositions& rest, const Vec6& raw,
                     const std::array<Vec6, 8>& recovered, const Mat6& compliance);
double element_error(const HexMesh& mesh, ElemId e, const RecoveredStressField& field,
                     const Material& material);

/// s_h^T C s_h times the element volume.
double element_energy(const CornerPositions& rest, const Vec6& raw, const Mat6& compliance);

/// sqrt(sum eta_e^2 / sum energy); nullopt when the energy vanishes.
std::optional<double> global_relative_error(std::span<const double> errors,
                                            std::span<const double> energies);

/// +1, -1 or 0 by the change of the Frobenius norm of the stress tensor.
int stress_trend(const Vec6& current, const Vec6& previous, double dead_band = 1e-12);

struct ElementIndicator {
  ElemId element;
  double error = 0.0;
  int trend = 0;
  int level = 0;
};

struct MarkingResult {
  std::vector<ElemId> refine;
  std::vector<ElemId> coarsen;
  double theta = kDefaultMarkingFraction;
  double max_error = 0.0;
};

/// Maximum strategy: refine rising elements with eta_e >= theta max; coarsen
/// falling refined elements below the threshold.
MarkingResult mark(std::span<const ElementIndicator> indicators, double theta = kDefaultMarkingFraction);

struct ErrorEstimate {
  std::vector<ElemId> elements;  // live elements, id order
  std::vector<double> errors;    // aligned with elements
  std::vector<double> energies;  // aligned with elements
  ElementStress center;
  double max_error = 0.0;
  std::optional<double> relative_error;
  std::size_t fallback_nodes = 0;
};

/// Center stresses, recovery, per-element errors and the relative error.
ErrorEstimate estimate_error(const HexMesh& mesh, const Material& material,
                             const NodalField& positions, bool corotated = true);

}  // namespace hexadapt
