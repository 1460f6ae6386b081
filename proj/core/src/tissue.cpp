#include "hexadapt/tissue.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Geometry>

namespace hexadapt {

namespace {

constexpr double kGauss = 0.57735026918962576451;

}  // namespace

TissueBody::TissueBody(HexMesh mesh, Material material, bool corotational)
    : mesh_(std::move(mesh)), material_(material), corotational_(corotational) {
  material_.validate();
  x_ = rest_field(mesh_);
  v_.assign(mesh_.node_capacity(), Vec3::Zero());
  ensure_capacity();
}

void TissueBody::ensure_capacity() {
  const std::size_t nn = mesh_.node_capacity();
  for (std::size_t i = x_.size(); i < nn; ++i) x_.push_back(mesh_.rest_positions()[i]);
  v_.resize(nn, Vec3::Zero());
  const std::size_t ne = mesh_.element_capacity();
  k_cache_.resize(ne, nullptr);
  rotations_.resize(ne, Mat3::Identity());
  previous_stress_.resize(ne, Vec6::Zero());
  has_previous_.resize(ne, 0);
}

void TissueBody::invalidate_topology() {
  reduction_.reset();
  slave_index_.clear();
  ensure_capacity();
}

void TissueBody::set_position(NodeId n, const Vec3& p) {
  if (!mesh_.is_live(n)) throw StaleReference("set_position: node is not live");
  x_[n.index()] = p;
}

void TissueBody::set_velocity(NodeId n, const Vec3& v) {
  if (!mesh_.is_live(n)) throw StaleReference("set_velocity: node is not live");
  v_[n.index()] = v;
}

void TissueBody::add_support(DisplacementSupport support) { supports_.push_back(std::move(support)); }

void TissueBody::add_traction(TractionLoad load) { tractions_.push_back(std::move(load)); }

const TransformationMatrix& TissueBody::reduction() {
  if (!reduction_) {
    reduction_ = build_T(mesh_, resolve_chains(detect_t_junctions(mesh_)), 3);
    slave_index_.assign(mesh_.node_capacity(), -1);
    for (std::size_t i = 0; i < reduction_->slaves.size(); ++i) {
      slave_index_[reduction_->slaves[i].node.index()] = static_cast<int>(i);
    }
  }
  return *reduction_;
}

Eigen::Index TissueBody::num_reduced_dofs() { return reduction().t.cols(); }

VecX TissueBody::pack(const NodalField& field) {
  const DofMap& map = reduction().map;
  VecX out(3 * map.num_full_nodes);
  for (NodeId n : map.nodes) out.segment<3>(3 * map.full_index[n.index()]) = field[n.index()];
  return out;
}

void TissueBody::update_rotations() {
  ensure_capacity();
  for (ElemId e : mesh_.live_elements()) {
    rotations_[e.index()] =
        corotational_ ? element_rotation(mesh_.rest_corners(e), mesh_.corners(e, x_)) : Mat3::Identity();
  }
}

const Matrix24& TissueBody::element_stiffness_cached(ElemId e) {
  ensure_capacity();
  if (const Matrix24* k = k_cache_[e.index()]) return *k;
  const CornerPositions rest = mesh_.rest_corners(e);
  const double q = mesh_.merge_tolerance();
  std::array<long long, 21> key{};
  for (int i = 1; i < 8; ++i) {
    for (int k = 0; k < 3; ++k) key[3 * (i - 1) + k] = std::llround((rest[i][k] - rest[0][k]) / q);
  }
  auto& slot = k_shapes_[key];
  if (!slot) slot = std::make_unique<Matrix24>(element_stiffness(rest, elasticity_matrix(material_)));
  k_cache_[e.index()] = slot.get();
  return *slot;
}

Vector24 TissueBody::element_positions(ElemId e) const { return gather(mesh_.corners(e, x_)); }

SparseMatrix TissueBody::stiffness() {
  const DofMap& map = reduction().map;
  const Eigen::Index n = 3 * map.num_full_nodes;
  std::vector<Eigen::Triplet<double>> trips;
  const auto elems = mesh_.live_elements();
  trips.reserve(elems.size() * 576);
  for (ElemId e : elems) {
    const Matrix24& k = element_stiffness_cached(e);
    const Mat3& r = rotations_[e.index()];
    const auto& nodes = mesh_.element(e).nodes;
    std::array<Eigen::Index, 8> base;
    for (int i = 0; i < 8; ++i) base[i] = 3 * map.full_index[nodes[i].index()];
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        const Mat3 block = r * k.block<3, 3>(3 * i, 3 * j) * r.transpose();
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) trips.emplace_back(base[i] + a, base[j] + b, block(a, b));
        }
      }
    }
  }
  SparseMatrix kg(n, n);
  kg.setFromTriplets(trips.begin(), trips.end());
  return kg;
}

VecX TissueBody::lumped_mass() {
  const DofMap& map = reduction().map;
  VecX m = VecX::Zero(3 * map.num_full_nodes);
  for (ElemId e : mesh_.live_elements()) {
    const Vector24 me = hexadapt::lumped_mass(mesh_, e, material_);
    const auto& nodes = mesh_.element(e).nodes;
    for (int i = 0; i < 8; ++i) m.segment<3>(3 * map.full_index[nodes[i].index()]) += me.segment<3>(3 * i);
  }
  return m;
}

VecX TissueBody::internal_force() {
  const DofMap& map = reduction().map;
  VecX f = VecX::Zero(3 * map.num_full_nodes);
  for (ElemId e : mesh_.live_elements()) {
    const Vector24 fe = corotational_force(element_stiffness_cached(e), rotations_[e.index()],
                                           element_positions(e), gather(mesh_.rest_corners(e)));
    const auto& nodes = mesh_.element(e).nodes;
    for (int i = 0; i < 8; ++i) f.segment<3>(3 * map.full_index[nodes[i].index()]) += fe.segment<3>(3 * i);
  }
  return f;
}

VecX TissueBody::external_force() {
  const DofMap& map = reduction().map;
  VecX f = VecX::Zero(3 * map.num_full_nodes);
  if (tractions_.empty()) return f;
  for (ElemId e : mesh_.live_elements()) {
    const CornerPositions rest = mesh_.rest_corners(e);
    const auto& nodes = mesh_.element(e).nodes;
    for (int axis = 0; axis < 3; ++axis) {
      for (int sign : {-1, 1}) {
        std::vector<int> face;
        for (int i = 0; i < 8; ++i) {
          if (kCornerSigns[i][axis] == sign) face.push_back(i);
        }
        for (const auto& load : tractions_) {
          const bool on = std::all_of(face.begin(), face.end(),
                                      [&](int i) { return load.on_face(rest[i]); });
          if (!on) continue;
          const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
          for (int s1 : {-1, 1}) {
            for (int s2 : {-1, 1}) {
              Vec3 c = Vec3::Zero();
              c[axis] = sign;
              c[a1] = s1 * kGauss;
              c[a2] = s2 * kGauss;
              const NaturalCoord nc = NaturalCoord::from(c);
              const Mat3 j = jacobian(rest, nc);
              const double da = j.col(a1).cross(j.col(a2)).norm();
              const ShapeValues w = shape_values(nc);
              for (int i : face) f.segment<3>(3 * map.full_index[nodes[i].index()]) += w[i] * da * load.traction;
            }
          }
        }
      }
    }
  }
  return f;
}

namespace {

DirichletSet support_dofs(const HexMesh& mesh, const TransformationMatrix& tm,
                          const std::vector<DisplacementSupport>& supports, const NodalField* velocity) {
  DirichletSet d;
  for (NodeId n : tm.map.nodes) {
    const Eigen::Index r = tm.map.reduced_index[n.index()];
    if (r < 0) continue;
    std::array<bool, 3> fixed{false, false, false};
    for (const auto& s : supports) {
      if (!s.where(mesh.rest_position(n))) continue;
      for (int k = 0; k < 3; ++k) fixed[k] = fixed[k] || s.components[k];
    }
    for (int k = 0; k < 3; ++k) {
      if (fixed[k]) d.add(3 * r + k, velocity ? -(*velocity)[n.index()][k] : 0.0);
    }
  }
  return d;
}

}  // namespace

SolveReport TissueBody::solve_static(const SolverOptions& options) {
  x_ = rest_field(mesh_);
  ensure_capacity();
  update_rotations();
  const TransformationMatrix& tm = reduction();
  SteppingSystem sys;
  sys.a = stiffness();
  sys.b = external_force();
  sys.reduction = tm.t;
  sys.dirichlet = support_dofs(mesh_, tm, supports_, nullptr);
  SolveReport report;
  const VecX u = solve_reduced(sys, options, &report);
  for (NodeId n : tm.map.nodes) {
    x_[n.index()] = mesh_.rest_position(n) + u.segment<3>(3 * tm.map.full_index[n.index()]);
    v_[n.index()] = Vec3::Zero();
  }
  return report;
}

ReducedStep TissueBody::build_step(double tau, const VecX* extra_force) {
  update_rotations();
  const TransformationMatrix& tm = reduction();
  const SparseMatrix k = stiffness();
  const VecX m = lumped_mass();
  const SparseMatrix mass = diagonal_matrix(m);
  const SparseMatrix c = damping_matrix(k, mass, material_);
  const VecX v = pack(v_);
  VecX f_net = external_force() - internal_force() - c * v;
  if (extra_force) {
    if (extra_force->size() != f_net.size()) throw InvalidArgument("build_step: extra force size mismatch");
    f_net += *extra_force;
  }
  SteppingSystem full = assemble_step(mass, c, k, f_net, v, tau);
  auto [a, b] = reduce_system(full.a, full.b, tm.t);
  const DirichletSet d = support_dofs(mesh_, tm, supports_, &v_);
  apply_dirichlet(a, b, d);
  ReducedStep out;
  out.a = std::move(a);
  out.b = std::move(b);
  out.fixed.assign(static_cast<std::size_t>(out.b.size()), 0);
  for (const auto& [dof, value] : d.values) out.fixed[static_cast<std::size_t>(dof)] = 1;
  return out;
}

void TissueBody::apply_step(const VecX& dv_reduced, double tau) {
  const TransformationMatrix& tm = reduction();
  const VecX dv = expand_solution(tm.t, dv_reduced);
  for (NodeId n : tm.map.nodes) {
    const Eigen::Index i = 3 * tm.map.full_index[n.index()];
    v_[n.index()] += dv.segment<3>(i);
    x_[n.index()] += tau * v_[n.index()];
  }
  snap_slaves();
}

SolveReport TissueBody::step(double tau, const SolverOptions& options) {
  ReducedStep s = build_step(tau);
  SteppingSystem sys;
  sys.a = std::move(s.a);
  sys.b = std::move(s.b);
  SolveReport report;
  const VecX dv = solve_reduced(sys, options, &report);
  apply_step(dv, tau);
  return report;
}

std::vector<std::pair<Eigen::Index, double>> TissueBody::point_weights(ElemId e, const NaturalCoord& c) {
  if (!mesh_.is_live(e)) throw StaleReference("point_weights: element is not live");
  const TransformationMatrix& tm = reduction();
  const ShapeValues w = shape_values(c);
  std::map<Eigen::Index, double> acc;
  const auto& nodes = mesh_.element(e).nodes;
  for (int i = 0; i < 8; ++i) {
    const NodeId n = nodes[i];
    const Eigen::Index r = tm.map.reduced_index[n.index()];
    if (r >= 0) {
      acc[r] += w[i];
      continue;
    }
    const int s = slave_index_[n.index()];
    if (s < 0) throw TopologyCorruption("point_weights: node is neither master nor slave");
    for (const auto& [m, wm] : tm.slaves[static_cast<std::size_t>(s)].masters) {
      acc[tm.map.reduced_index[m.index()]] += w[i] * wm;
    }
  }
  return {acc.begin(), acc.end()};
}

Vec3 TissueBody::point_position(ElemId e, const NaturalCoord& c) const {
  return interpolate(mesh_.corners(e, x_), c);
}

Vec3 TissueBody::point_velocity(ElemId e, const NaturalCoord& c) const {
  return interpolate(mesh_.corners(e, v_), c);
}

const RefinementRecord& TissueBody::refine(ElemId e, const RefinementTemplate& tmpl) {
  if (!mesh_.is_live(e)) throw StaleReference("refine: element is not live");
  const CornerPositions xc = mesh_.corners(e, x_);
  const CornerPositions vc = mesh_.corners(e, v_);
  RefinementRecord rec = hexadapt::refine(mesh_, e, tmpl);
  invalidate_topology();
  for (const auto& cn : rec.created_nodes) {
    x_[cn.id.index()] = interpolate(xc, cn.coord);
    v_[cn.id.index()] = interpolate(vc, cn.coord);
  }
  for (ElemId c : rec.children) {
    previous_stress_[c.index()] = previous_stress_[e.index()];
    has_previous_[c.index()] = has_previous_[e.index()];
  }
  return history_.add(std::move(rec));
}

void TissueBody::coarsen(ElemId parent) {
  const RefinementRecord* rec = history_.find(parent);
  if (!rec) throw InvalidArgument("coarsen: element has no refinement record");
  Vec6 mean = Vec6::Zero();
  for (ElemId c : rec->children) mean += previous_stress_[c.index()];
  hexadapt::coarsen(mesh_, *rec);
  previous_stress_[parent.index()] = mean / static_cast<double>(rec->children.size());
  history_.remove(parent);
  invalidate_topology();
}

void TissueBody::snap_slaves() {
  const TransformationMatrix& tm = reduction();
  for (const auto& s : tm.slaves) {
    Vec3 x = Vec3::Zero(), v = Vec3::Zero();
    for (const auto& [m, w] : s.masters) {
      x += w * x_[m.index()];
      v += w * v_[m.index()];
    }
    x_[s.node.index()] = x;
    v_[s.node.index()] = v;
  }
}

ErrorEstimate TissueBody::estimate() { return estimate_error(mesh_, material_, x_, corotational_); }

AdaptReport TissueBody::adapt(const AdaptOptions& options, const std::function<bool(ElemId)>& blocked) {
  ensure_capacity();
  const ErrorEstimate est = estimate();
  AdaptReport report;
  report.max_error = est.max_error;
  report.relative_error_defined = est.relative_error.has_value();
  report.relative_error = est.relative_error.value_or(0.0);

  const Vec6 zero = Vec6::Zero();
  auto frobenius = [](const Vec6& v) { return std::sqrt(v.head<3>().squaredNorm() + 2.0 * v.tail<3>().squaredNorm()); };
  const double floor = options.stress_floor * material_.young_modulus;
  std::vector<ElementIndicator> ind;
  ind.reserve(est.elements.size());
  for (std::size_t i = 0; i < est.elements.size(); ++i) {
    const ElemId e = est.elements[i];
    const Vec6& s = est.center[e.index()];
    const Vec6& prev = options.from_rest ? zero : previous_stress_[e.index()];
    const bool known = options.from_rest || has_previous_[e.index()];
    const bool loaded = std::max(frobenius(s), frobenius(prev)) > floor;
    const int trend = known && loaded ? stress_trend(s, prev) : 0;
    ind.push_back({e, est.errors[i], trend, mesh_.element(e).level});
    previous_stress_[e.index()] = s;
    has_previous_[e.index()] = 1;
  }
  MarkingResult marks = mark(ind, options.theta);
  if (!report.relative_error_defined || report.max_error <= 0.0) return report;
  if (options.target_relative_error && report.relative_error <= *options.target_relative_error) {
    marks.refine.clear();
  }

  // A parent is restored only when every child is a live leaf marked for coarsening.
  std::map<ElemId, std::size_t> votes;
  for (ElemId c : marks.coarsen) votes[mesh_.element(c).parent]++;
  for (const auto& [parent, count] : votes) {
    const RefinementRecord* rec = history_.find(parent);
    if (!rec || count != rec->children.size()) continue;
    if (blocked && blocked(parent)) continue;
    const bool leaves = std::all_of(rec->children.begin(), rec->children.end(), [&](ElemId c) {
      return mesh_.is_live(c) && mesh_.element(c).children.empty();
    });
    if (!leaves) continue;
    coarsen(parent);
    report.coarsened_parents.push_back(parent);
    ++report.coarsened;
  }

  const RefinementTemplate& tmpl = find_template(options.refine_template);
  for (ElemId e : marks.refine) {
    if (!mesh_.is_live(e) || mesh_.element(e).level >= options.max_level) continue;
    report.new_records.push_back(refine(e, tmpl));
    ++report.refined;
  }
  if (report.refined > 0 || report.coarsened > 0) snap_slaves();
  return report;
}

}  // namespace hexadapt
