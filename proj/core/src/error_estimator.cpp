#include "hexadapt/error_estimator.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace hexadapt {

namespace {

constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

Mat3 voigt_to_tensor(const Vec6& s) {
  Mat3 t;
  t << s[0], s[3], s[5],  //
      s[3], s[1], s[4],   //
      s[5], s[4], s[2];
  return t;
}

Vec6 tensor_to_voigt(const Mat3& t) {
  Vec6 s;
  s << t(0, 0), t(1, 1), t(2, 2), t(0, 1), t(1, 2), t(2, 0);
  return s;
}

Vec3 element_center(const CornerPositions& c) {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : c) sum += p;
  return sum / 8.0;
}

Mat6 compliance_matrix(const Material& m) { return elasticity_matrix(m).inverse(); }

}  // namespace

Vec6 center_stress(const HexMesh& mesh, ElemId e, const Material& material,
                   const NodalField& positions, bool corotated) {
  const CornerPositions rest = mesh.rest_corners(e);
  const CornerPositions cur = mesh.corners(e, positions);
  const StrainDisplacement b = strain_displacement(rest, NaturalCoord{});
  const Mat6 d = elasticity_matrix(material);
  Vector24 u;
  if (corotated) {
    const Mat3 r = element_rotation(rest, cur);
    for (int i = 0; i < 8; ++i) u.segment<3>(3 * i) = r.transpose() * cur[i] - rest[i];
    const Vec6 local = d * b * u;
    return tensor_to_voigt(r * voigt_to_tensor(local) * r.transpose());
  }
  for (int i = 0; i < 8; ++i) u.segment<3>(3 * i) = cur[i] - rest[i];
  return d * b * u;
}

ElementStress center_stresses(const HexMesh& mesh, const Material& material,
                              const NodalField& positions, bool corotated) {
  ElementStress out(mesh.element_capacity(), Vec6::Zero());
  for (ElemId e : mesh.live_elements()) {
    out[e.index()] = center_stress(mesh, e, material, positions, corotated);
  }
  return out;
}

Eigen::Matrix<double, 8, 1> StressPolynomial::basis(const Vec3& s) {
  Eigen::Matrix<double, 8, 1> p;
  p << 1.0, s.x(), s.y(), s.z(), s.x() * s.y(), s.y() * s.z(), s.z() * s.x(), s.x() * s.y() * s.z();
  return p;
}

std::optional<StressPolynomial> StressPolynomial::fit(std::span<const Vec3> points,
                                                      std::span<const Vec6> samples) {
  if (points.size() != samples.size()) throw InvalidArgument("StressPolynomial::fit: size mismatch");
  if (points.size() < 8) return std::nullopt;
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  StressPolynomial poly;
  poly.center_ = 0.5 * (lo + hi);
  poly.half_extent_ = 0.5 * (hi - lo);
  for (int k = 0; k < 3; ++k) {
    if (!(poly.half_extent_[k] > 0.0)) return std::nullopt;
  }
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 6> rhs = Eigen::Matrix<double, 8, 6>::Zero();
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto p = basis((points[k] - poly.center_).cwiseQuotient(poly.half_extent_));
    a.noalias() += p * p.transpose();
    rhs.noalias() += p * samples[k].transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> eig(a, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-10 * ev.maxCoeff())) return std::nullopt;
  poly.coeffs_ = a.ldlt().solve(rhs);
  return poly;
}

Vec6 StressPolynomial::evaluate(const Vec3& p) const {
  return coeffs_.transpose() * basis((p - center_).cwiseQuotient(half_extent_));
}

std::optional<StressPolynomial> node_patch_polynomial(const HexMesh& mesh, NodeId node,
                                                      const ElementStress& center) {
  const auto patch = mesh.elements_of(node);
  if (patch.size() < 8) return std::nullopt;
  std::vector<Vec3> pts;
  std::vector<Vec6> vals;
  pts.reserve(patch.size());
  vals.reserve(patch.size());
  for (ElemId e : patch) {
    pts.push_back(element_center(mesh.rest_corners(e)));
    vals.push_back(center.at(e.index()));
  }
  return StressPolynomial::fit(pts, vals);
}

namespace {

// Breadth-first rings over node-element-node connectivity; within the first
// ring holding a valid patch the closest node (then smallest id) wins.
template <class Lookup>
std::optional<Vec6> nearest_fallback(const HexMesh& mesh, NodeId node, Lookup&& poly_of) {
  const Vec3& x = mesh.rest_position(node);
  std::vector<char> seen(mesh.node_capacity(), 0);
  seen[node.index()] = 1;
  std::vector<NodeId> frontier{node};
  while (!frontier.empty()) {
    std::vector<NodeId> next;
    for (NodeId n : frontier) {
      for (ElemId e : mesh.elements_of(n)) {
        for (NodeId m : mesh.element(e).nodes) {
          if (seen[m.index()]) continue;
          seen[m.index()] = 1;
          next.push_back(m);
        }
      }
    }
    std::sort(next.begin(), next.end());
    const StressPolynomial* best = nullptr;
    double best_d = 0.0;
    for (NodeId m : next) {
      const StressPolynomial* p = poly_of(m);
      if (!p) continue;
      const double d = (mesh.rest_position(m) - x).squaredNorm();
      if (!best || d < best_d) {
        best = p;
        best_d = d;
      }
    }
    if (best) return best->evaluate(x);
    frontier = std::move(next);
  }
  return std::nullopt;
}

}  // namespace

Vec6 spr_recover(const HexMesh& mesh, NodeId node, const ElementStress& center) {
  if (!mesh.is_live(node)) throw StaleReference("spr_recover: node is not live");
  if (auto own = node_patch_polynomial(mesh, node, center)) return own->evaluate(mesh.rest_position(node));
  std::vector<std::optional<StressPolynomial>> cache(mesh.node_capacity());
  std::vector<char> done(mesh.node_capacity(), 0);
  auto lookup = [&](NodeId m) -> const StressPolynomial* {
    if (!done[m.index()]) {
      cache[m.index()] = node_patch_polynomial(mesh, m, center);
      done[m.index()] = 1;
    }
    return cache[m.index()] ? &*cache[m.index()] : nullptr;
  };
  if (auto v = nearest_fallback(mesh, node, lookup)) return *v;
  throw EstimatorFailure("spr_recover: no node with a valid patch is reachable");
}

RecoveredStressField recover_stress_field(const HexMesh& mesh, const ElementStress& center) {
  RecoveredStressField field;
  field.center = center;
  field.nodal.assign(mesh.node_capacity(), Vec6::Zero());
  const auto nodes = mesh.live_nodes();
  std::vector<std::optional<StressPolynomial>> polys(mesh.node_capacity());
  for (NodeId n : nodes) polys[n.index()] = node_patch_polynomial(mesh, n, center);
  auto lookup = [&](NodeId m) -> const StressPolynomial* {
    return polys[m.index()] ? &*polys[m.index()] : nullptr;
  };
  for (NodeId n : nodes) {
    if (const auto* p = lookup(n)) {
      field.nodal[n.index()] = p->evaluate(mesh.rest_position(n));
      continue;
    }
    auto v = nearest_fallback(mesh, n, lookup);
    if (!v) throw EstimatorFailure("recover_stress_field: no node with a valid patch is reachable");
    field.nodal[n.index()] = *v;
    ++field.fallback_nodes;
  }
  return field;
}

double element_error(const CornerPositions& rest, const Vec6& raw,
                     const std::array<Vec6, 8>& recovered, const Mat6& compliance) {
  double sum = 0.0;
  for (int q = 0; q < 8; ++q) {
    const auto& s = kCornerSigns[q];
    const NaturalCoord c{s[0] * kGauss, s[1] * kGauss, s[2] * kGauss};
    const ShapeValues n = shape_values(c);
    Vec6 ss = Vec6::Zero();
    for (int i = 0; i < 8; ++i) ss += n[i] * recovered[i];
    const Vec6 diff = raw - ss;
    sum += diff.dot(compliance * diff) * jacobian(rest, c).determinant();
  }
  return std::sqrt(std::max(sum, 0.0));
}

double element_error(const HexMesh& mesh, ElemId e, const RecoveredStressField& field,
                     const Material& material) {
  std::array<Vec6, 8> rec;
  const auto& nodes = mesh.element(e).nodes;
  for (int i = 0; i < 8; ++i) rec[i] = field.nodal.at(nodes[i].index());
  return element_error(mesh.rest_corners(e), field.center.at(e.index()), rec,
                       compliance_matrix(material));
}

double element_energy(const CornerPositions& rest, const Vec6& raw, const Mat6& compliance) {
  return raw.dot(compliance * raw) * element_volume(rest);
}

std::optional<double> global_relative_error(std::span<const double> errors,
                                            std::span<const double> energies) {
  double num = 0.0, den = 0.0;
  for (double e : errors) num += e * e;
  for (double w : energies) den += w;
  if (!(den > 0.0)) return std::nullopt;
  return std::sqrt(num / den);
}

int stress_trend(const Vec6& current, const Vec6& previous, double dead_band) {
  const double a = voigt_to_tensor(current).norm();
  const double b = voigt_to_tensor(previous).norm();
  const double scale = std::max({a, b, 1e-300});
  const double d = a - b;
  if (std::abs(d) <= dead_band * scale) return 0;
  return d > 0.0 ? 1 : -1;
}

MarkingResult mark(std::span<const ElementIndicator> indicators, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidArgument("mark: theta must lie in (0, 1)");
  MarkingResult r;
  r.theta = theta;
  for (const auto& ind : indicators) r.max_error = std::max(r.max_error, ind.error);
  const double threshold = theta * r.max_error;
  for (const auto& ind : indicators) {
    if (ind.trend > 0 && ind.error >= threshold) {
      r.refine.push_back(ind.element);
    } else if (ind.trend < 0 && ind.error < threshold && ind.level > 0) {
      r.coarsen.push_back(ind.element);
    }
  }
  return r;
}

ErrorEstimate estimate_error(const HexMesh& mesh, const Material& material,
                             const NodalField& positions, bool corotated) {
  ErrorEstimate est;
  est.center = center_stresses(mesh, material, positions, corotated);
  const RecoveredStressField field = recover_stress_field(mesh, est.center);
  est.fallback_nodes = field.fallback_nodes;
  const Mat6 compliance = compliance_matrix(material);
  est.elements = mesh.live_elements();
  est.errors.reserve(est.elements.size());
  est.energies.reserve(est.elements.size());
  for (ElemId e : est.elements) {
    const auto rest = mesh.rest_corners(e);
    std::array<Vec6, 8> rec;
    const auto& nodes = mesh.element(e).nodes;
    for (int i = 0; i < 8; ++i) rec[i] = field.nodal[nodes[i].index()];
    const double err = element_error(rest, est.center[e.index()], rec, compliance);
    est.errors.push_back(err);
    est.energies.push_back(element_energy(rest, est.center[e.index()], compliance));
    est.max_error = std::max(est.max_error, err);
  }
  est.relative_error = global_relative_error(est.errors, est.energies);
  return est;
}

}  // namespace hexadapt
