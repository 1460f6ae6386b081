#pragma once

// Linear-elastic hexahedron matrices and the corotational internal force
//   f_e = R_e K_e (R_e^T x_e - x0_e),
// with R_e the rotation factor of the polar decomposition of the deformation
// gradient at the element center.
//
// Voigt ordering throughout: (xx, yy, zz, xy, yz, zx), engineering shear
// strains (gamma = 2 eps) so that eps . sigma is the energy density.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hexadapt/mesh.hpp"

namespace hexadapt {

using Matrix24 = Eigen::Matrix<double, 24, 24>;
using Vector24 = Eigen::Matrix<double, 24, 1>;
using StrainDisplacement = Eigen::Matrix<double, 6, 24>;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Material {
  double young_modulus = 1.0;
  double poisson_ratio = 0.0;
  double density = 1.0;
  double rayleigh_alpha = 0.1;
  double rayleigh_beta = 0.1;

  /// Throws InvalidArgument if any invariant is violated.
  void validate() const;
  [[nodiscard]] double lame_lambda() const;
  [[nodiscard]] double shear_modulus() const;
};

Mat6 elasticity_matrix(double young_modulus, double poisson_ratio);
inline Mat6 elasticity_matrix(const Material& m) {
  return elasticity_matrix(m.young_modulus, m.poisson_ratio);
}

/// Lame form lambda tr(eps) I + 2 mu eps, in Voigt notation.
Vec6 lame_stress(const Vec6& strain, double lambda, double mu);

/// B matrix at c (derivatives w.r.t. rest cartesian coordinates). Optionally
/// returns det J. Throws DegenerateGeometry for det J <= 0.
StrainDisplacement strain_displacement(const CornerPositions& rest, const NaturalCoord& c,
                                       double* det_jacobian = nullptr);

/// 2x2x2 Gauss quadrature of B^T D B.
Matrix24 element_stiffness(const CornerPositions& rest, const Mat6& elasticity);
Matrix24 element_stiffness(const HexMesh& mesh, ElemId e, const Material& material);

/// Rotation factor of the polar decomposition of F at the element center.
Mat3 element_rotation(const CornerPositions& rest, const CornerPositions& current);

/// R K (R^T x - x0), R applied per node.
Vector24 corotational_force(const Matrix24& stiffness, const Mat3& rotation, const Vector24& x,
                            const Vector24& x0);

/// Block-diagonal rotation acting on all 8 nodes.
Matrix24 block_rotation(const Mat3& rotation);

/// Row-sum lumped mass (per node, repeated for the three components).
Vector24 lumped_mass(const CornerPositions& rest, double density);
Vector24 lumped_mass(const HexMesh& mesh, ElemId e, const Material& material);

/// Rayleigh damping alpha M + beta K.
SparseMatrix damping_matrix(const SparseMatrix& stiffness, const SparseMatrix& mass,
                            const Material& material);

Vector24 gather(const CornerPositions& corners);

}  // namespace hexadapt
