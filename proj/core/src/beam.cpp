#include "hexadapt/beam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hexadapt {

namespace {

Mat3 frame_from_axis(const Vec3& axis) {
  const Vec3 e1 = axis.normalized();
  Vec3 ref = std::abs(e1.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  Vec3 e2 = ref.cross(e1).normalized();
  Vec3 e3 = e1.cross(e2);
  Mat3 r;
  r.col(0) = e1;
  r.col(1) = e2;
  r.col(2) = e3;
  return r;
}

Vec3 rotation_vector(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

}  // namespace

Matrix12 beam_stiffness(double rest_length, double radius, const Material& material) {
  if (!(rest_length > 0.0) || !(radius > 0.0)) {
    throw InvalidArgument("beam_stiffness: length and radius must be positive");
  }
  const double pi = std::numbers::pi;
  const double l = rest_length;
  const double e = material.young_modulus;
  const double g = material.shear_modulus();
  const double area = pi * radius * radius;
  const double inertia = pi * std::pow(radius, 4) / 4.0;
  const double polar = 2.0 * inertia;
  const double phi = 12.0 * e * inertia / (kTimoshenkoShearCorrection * g * area * l * l);

  Matrix12 k = Matrix12::Zero();
  const double ka = e * area / l;
  k(0, 0) = k(6, 6) = ka;
  k(0, 6) = k(6, 0) = -ka;
  const double kt = g * polar / l;
  k(3, 3) = k(9, 9) = kt;
  k(3, 9) = k(9, 3) = -kt;

  const double c = e * inertia / ((1.0 + phi) * l * l * l);
  // Bending in the local xy plane: (uy, rz).
  {
    const int v1 = 1, r1 = 5, v2 = 7, r2 = 11;
    k(v1, v1) = k(v2, v2) = 12.0 * c;
    k(v1, v2) = k(v2, v1) = -12.0 * c;
    k(v1, r1) = k(r1, v1) = k(v1, r2) = k(r2, v1) = 6.0 * l * c;
    k(v2, r1) = k(r1, v2) = k(v2, r2) = k(r2, v2) = -6.0 * l * c;
    k(r1, r1) = k(r2, r2) = (4.0 + phi) * l * l * c;
    k(r1, r2) = k(r2, r1) = (2.0 - phi) * l * l * c;
  }
  // Bending in the local xz plane: (uz, ry), opposite coupling sign.
  {
    const int w1 = 2, r1 = 4, w2 = 8, r2 = 10;
    k(w1, w1) = k(w2, w2) = 12.0 * c;
    k(w1, w2) = k(w2, w1) = -12.0 * c;
    k(w1, r1) = k(r1, w1) = k(w1, r2) = k(r2, w1) = -6.0 * l * c;
    k(w2, r1) = k(r1, w2) = k(w2, r2) = k(r2, w2) = 6.0 * l * c;
    k(r1, r1) = k(r2, r2) = (4.0 + phi) * l * l * c;
    k(r1, r2) = k(r2, r1) = (2.0 - phi) * l * l * c;
  }
  return k;
}

NeedleModel NeedleModel::straight(const Vec3& base, const Vec3& direction, double length,
                                  int segments, double radius, const Material& material) {
  if (segments < 1) throw InvalidArgument("needle: at least one segment required");
  if (!(length > 0.0) || !(radius > 0.0)) throw InvalidArgument("needle: length and radius must be positive");
  if (!(direction.norm() > 0.0)) throw InvalidArgument("needle: zero direction");
  material.validate();
  NeedleModel m;
  m.radius_ = radius;
  m.material_ = material;
  const Vec3 d = direction.normalized();
  const Mat3 frame = frame_from_axis(d);
  const Quat q(frame);
  for (int i = 0; i <= segments; ++i) {
    const Vec3 p = base + d * (length * i / segments);
    m.rest_positions_.push_back(p);
    m.positions_.push_back(p);
    m.rest_orientations_.push_back(q);
    m.orientations_.push_back(q);
  }
  m.rest_frames_.assign(segments, frame);
  return m;
}

double NeedleModel::rest_length(std::size_t segment) const {
  return (rest_positions_[segment + 1] - rest_positions_[segment]).norm();
}

double NeedleModel::total_rest_length() const {
  double s = 0.0;
  for (std::size_t i = 0; i < num_segments(); ++i) s += rest_length(i);
  return s;
}

void NeedleModel::set_orientation(std::size_t i, const Mat3& r) {
  orientations_[i] = Quat(r).normalized();
}

void NeedleModel::advance(const VecX& velocity, double tau) {
  if (static_cast<std::size_t>(velocity.size()) != num_dofs()) {
    throw InvalidArgument("needle advance: velocity dimension mismatch");
  }
  for (std::size_t i = 0; i < num_nodes(); ++i) {
    positions_[i] += tau * velocity.segment<3>(6 * i);
    const Vec3 w = tau * velocity.segment<3>(6 * i + 3);
    const double angle = w.norm();
    if (angle > 0.0) {
      orientations_[i] = (Quat(Eigen::AngleAxisd(angle, w / angle)) * orientations_[i]).normalized();
    }
  }
}

void NeedleModel::apply_rigid_motion(const Mat3& rotation, const Vec3& translation) {
  const Quat q(rotation);
  for (std::size_t i = 0; i < num_nodes(); ++i) {
    positions_[i] = rotation * positions_[i] + translation;
    orientations_[i] = (q * orientations_[i]).normalized();
  }
}

ArcLocation NeedleModel::locate_arc(double s) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < num_segments(); ++i) {
    const double l = rest_length(i);
    if (s <= acc + l || i + 1 == num_segments()) {
      return {i, std::clamp((s - acc) / l, 0.0, 1.0)};
    }
    acc += l;
  }
  return {0, 0.0};
}

Vec3 NeedleModel::position_at(double s) const {
  const ArcLocation a = locate_arc(s);
  return (1.0 - a.t) * positions_[a.segment] + a.t * positions_[a.segment + 1];
}

Vec3 NeedleModel::tangent_at(double s) const {
  const ArcLocation a = locate_arc(s);
  return (positions_[a.segment + 1] - positions_[a.segment]).normalized();
}

double NeedleModel::project(const Vec3& p) const {
  double best_s = 0.0;
  double best_d = std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t i = 0; i < num_segments(); ++i) {
    const Vec3 a = positions_[i];
    const Vec3 ab = positions_[i + 1] - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const double d = (a + t * ab - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_s = acc + t * rest_length(i);
    }
    acc += rest_length(i);
  }
  return best_s;
}

BeamElementMatrices NeedleModel::segment_frame(std::size_t segment) const {
  const Vec3 p0 = positions_[segment];
  const Vec3 p1 = positions_[segment + 1];
  const double l = (p1 - p0).norm();
  if (!(l > 1e-12 * rest_length(segment))) {
    throw DegenerateGeometry("needle: collapsed beam segment");
  }
  const Vec3 e1 = (p1 - p0) / l;
  // Twist reference: mean incremental rotation of the two end nodes.
  const Quat d0 = orientations_[segment] * rest_orientations_[segment].conjugate();
  const Quat d1 = orientations_[segment + 1] * rest_orientations_[segment + 1].conjugate();
  const Mat3 predicted = d0.slerp(0.5, d1).toRotationMatrix() * rest_frames_[segment];
  Vec3 y = predicted.col(1);
  y -= y.dot(e1) * e1;
  if (!(y.norm() > 1e-12)) {
    y = predicted.col(2).cross(e1);
  }
  const Vec3 e2 = y.normalized();
  BeamElementMatrices out;
  out.rotation.col(0) = e1;
  out.rotation.col(1) = e2;
  out.rotation.col(2) = e1.cross(e2);
  out.stiffness = beam_stiffness(l, radius_, material_);
  return out;
}

Vector12 NeedleModel::local_displacement(std::size_t segment, const Mat3& frame) const {
  Vector12 d = Vector12::Zero();
  d[6] = (positions_[segment + 1] - positions_[segment]).norm() - rest_length(segment);
  for (int k = 0; k < 2; ++k) {
    const std::size_t n = segment + k;
    const Mat3 incr = (orientations_[n] * rest_orientations_[n].conjugate()).toRotationMatrix();
    d.segment<3>(6 * k + 3) = rotation_vector(frame.transpose() * incr * rest_frames_[segment]);
  }
  return d;
}

VecX needle_corotational_force(const NeedleModel& model) {
  VecX f = VecX::Zero(static_cast<Eigen::Index>(model.num_dofs()));
  for (std::size_t s = 0; s < model.num_segments(); ++s) {
    const BeamElementMatrices be = model.segment_frame(s);
    const Vector12 f_local = be.stiffness * model.local_displacement(s, be.rotation);
    for (int k = 0; k < 2; ++k) {
      const Eigen::Index row = static_cast<Eigen::Index>(6 * (s + k));
      f.segment<3>(row) += be.rotation * f_local.segment<3>(6 * k);
      f.segment<3>(row + 3) += be.rotation * f_local.segment<3>(6 * k + 3);
    }
  }
  return f;
}

Eigen::SparseMatrix<double> needle_stiffness(const NeedleModel& model) {
  const auto n = static_cast<Eigen::Index>(model.num_dofs());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(model.num_segments() * 144);
  for (std::size_t s = 0; s < model.num_segments(); ++s) {
    const BeamElementMatrices be = model.segment_frame(s);
    Matrix12 r = Matrix12::Zero();
    for (int b = 0; b < 4; ++b) r.block<3, 3>(3 * b, 3 * b) = be.rotation;
    const Matrix12 k = r * be.stiffness * r.transpose();
    const auto base = static_cast<Eigen::Index>(6 * s);
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) {
        if (k(i, j) != 0.0) trips.emplace_back(base + i, base + j, k(i, j));
      }
    }
  }
  Eigen::SparseMatrix<double> out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

VecX needle_lumped_mass(const NeedleModel& model) {
  const double pi = std::numbers::pi;
  const double r = model.radius();
  const double area = pi * r * r;
  const double polar = pi * std::pow(r, 4) / 2.0;
  const double rho = model.material().density;
  VecX m = VecX::Zero(static_cast<Eigen::Index>(model.num_dofs()));
  for (std::size_t s = 0; s < model.num_segments(); ++s) {
    const double l = model.rest_length(s);
    for (int k = 0; k < 2; ++k) {
      const auto row = static_cast<Eigen::Index>(6 * (s + k));
      m.segment<3>(row).array() += 0.5 * rho * area * l;
      m.segment<3>(row + 3).array() += 0.5 * rho * polar * l;
    }
  }
  return m;
}

}  // namespace hexadapt
