#include "hexadapt/corotational.hpp"

#include <cmath>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace hexadapt {

void Material::validate() const {
  if (!(young_modulus > 0.0)) throw InvalidArgument("material: young_modulus must be > 0");
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) {
    throw InvalidArgument("material: poisson_ratio must be in [0, 0.5)");
  }
  if (!(density > 0.0)) throw InvalidArgument("material: density must be > 0");
  if (!(rayleigh_alpha >= 0.0) || !(rayleigh_beta >= 0.0)) {
    throw InvalidArgument("material: rayleigh coefficients must be >= 0");
  }
}

double Material::lame_lambda() const {
  return young_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
}

double Material::shear_modulus() const { return young_modulus / (2.0 * (1.0 + poisson_ratio)); }

Mat6 elasticity_matrix(double young_modulus, double poisson_ratio) {
  const double nu = poisson_ratio;
  const double lambda = young_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = young_modulus / (2.0 * (1.0 + nu));
  Mat6 d = Mat6::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = lambda;
    d(i, i) += 2.0 * mu;
    d(i + 3, i + 3) = mu;
  }
  return d;
}

Vec6 lame_stress(const Vec6& strain, double lambda, double mu) {
  const double tr = strain[0] + strain[1] + strain[2];
  Vec6 s;
  for (int i = 0; i < 3; ++i) s[i] = lambda * tr + 2.0 * mu * strain[i];
  // Engineering shear: sigma_ij = mu * gamma_ij.
  for (int i = 3; i < 6; ++i) s[i] = mu * strain[i];
  return s;
}

StrainDisplacement strain_displacement(const CornerPositions& rest, const NaturalCoord& c,
                                       double* det_jacobian) {
  const Mat3 j = jacobian(rest, c);
  const double det = j.determinant();
  if (!(det > 0.0)) throw DegenerateGeometry("strain_displacement: non-positive Jacobian");
  if (det_jacobian) *det_jacobian = det;
  const Mat3 jinv_t = j.inverse().transpose();
  const ShapeGradients g = shape_gradients(c);
  StrainDisplacement b = StrainDisplacement::Zero();
  for (int i = 0; i < 8; ++i) {
    const Vec3 d = jinv_t * g[i];
    const int k = 3 * i;
    b(0, k) = d.x();
    b(1, k + 1) = d.y();
    b(2, k + 2) = d.z();
    b(3, k) = d.y();
    b(3, k + 1) = d.x();
    b(4, k + 1) = d.z();
    b(4, k + 2) = d.y();
    b(5, k) = d.z();
    b(5, k + 2) = d.x();
  }
  return b;
}

Matrix24 element_stiffness(const CornerPositions& rest, const Mat6& elasticity) {
  const double g = 1.0 / std::sqrt(3.0);
  Matrix24 k = Matrix24::Zero();
  for (const auto& s : kCornerSigns) {
    double det = 0.0;
    const StrainDisplacement b = strain_displacement(rest, {s[0] * g, s[1] * g, s[2] * g}, &det);
    k.noalias() += det * b.transpose() * elasticity * b;
  }
  return 0.5 * (k + k.transpose());
}

Matrix24 element_stiffness(const HexMesh& mesh, ElemId e, const Material& material) {
  if (!mesh.is_live(e)) throw StaleReference("element_stiffness: element is not live");
  return element_stiffness(mesh.rest_corners(e), elasticity_matrix(material));
}

Mat3 element_rotation(const CornerPositions& rest, const CornerPositions& current) {
  const Mat3 j = jacobian(rest, {});
  if (!(j.determinant() > 0.0)) throw DegenerateGeometry("element_rotation: inverted rest element");
  const Mat3 jinv_t = j.inverse().transpose();
  const ShapeGradients g = shape_gradients({});
  Mat3 f = Mat3::Zero();
  for (int i = 0; i < 8; ++i) f += current[i] * (jinv_t * g[i]).transpose();
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[2] > 1e-12 * sv[0])) {
    throw DegenerateGeometry("element_rotation: singular deformation gradient");
  }
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Matrix24 block_rotation(const Mat3& rotation) {
  Matrix24 r = Matrix24::Zero();
  for (int i = 0; i < 8; ++i) r.block<3, 3>(3 * i, 3 * i) = rotation;
  return r;
}

Vector24 corotational_force(const Matrix24& stiffness, const Mat3& rotation, const Vector24& x,
                            const Vector24& x0) {
  Vector24 local;
  for (int i = 0; i < 8; ++i) {
    local.segment<3>(3 * i) = rotation.transpose() * x.segment<3>(3 * i) - x0.segment<3>(3 * i);
  }
  const Vector24 f_local = stiffness * local;
  Vector24 f;
  for (int i = 0; i < 8; ++i) f.segment<3>(3 * i) = rotation * f_local.segment<3>(3 * i);
  return f;
}

Vector24 lumped_mass(const CornerPositions& rest, double density) {
  const double g = 1.0 / std::sqrt(3.0);
  Vector24 m = Vector24::Zero();
  for (const auto& s : kCornerSigns) {
    const NaturalCoord c{s[0] * g, s[1] * g, s[2] * g};
    const double det = jacobian(rest, c).determinant();
    const ShapeValues n = shape_values(c);
    for (int i = 0; i < 8; ++i) m.segment<3>(3 * i).array() += density * n[i] * det;
  }
  return m;
}

Vector24 lumped_mass(const HexMesh& mesh, ElemId e, const Material& material) {
  if (!mesh.is_live(e)) throw StaleReference("lumped_mass: element is not live");
  return lumped_mass(mesh.rest_corners(e), material.density);
}

SparseMatrix damping_matrix(const SparseMatrix& stiffness, const SparseMatrix& mass,
                            const Material& material) {
  SparseMatrix c = material.rayleigh_alpha * mass + material.rayleigh_beta * stiffness;
  c.prune(0.0);
  return c;
}

Vector24 gather(const CornerPositions& corners) {
  Vector24 v;
  for (int i = 0; i < 8; ++i) v.segment<3>(3 * i) = corners[i];
  return v;
}

}  // namespace hexadapt
