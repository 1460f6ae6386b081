#include "hexadapt/adaptivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <mutex>
#include <unordered_map>

namespace hexadapt {

RefinementTemplate regular_template(int a, int b, int c) {
  if (a < 1 || b < 1 || c < 1) throw InvalidArgument("regular_template: divisions must be >= 1");
  RefinementTemplate t;
  t.name = std::to_string(a) + "x" + std::to_string(b) + "x" + std::to_string(c);
  t.divisions = {a, b, c};
  const std::array<int, 3> div{a, b, c};
  auto coord = [&](int i, int axis) { return -1.0 + 2.0 * i / div[axis]; };

  // Lattice point -> template node index.
  std::vector<int> index(static_cast<std::size_t>((a + 1) * (b + 1) * (c + 1)), -1);
  auto lattice = [&](int i, int j, int k) -> int& {
    return index[static_cast<std::size_t>(i + (a + 1) * (j + (b + 1) * k))];
  };
  for (int corner = 0; corner < 8; ++corner) {
    const auto& s = kCornerSigns[corner];
    lattice(s[0] > 0 ? a : 0, s[1] > 0 ? b : 0, s[2] > 0 ? c : 0) = corner;
  }
  for (int k = 0; k <= c; ++k) {
    for (int j = 0; j <= b; ++j) {
      for (int i = 0; i <= a; ++i) {
        if (lattice(i, j, k) >= 0) continue;
        lattice(i, j, k) = 8 + static_cast<int>(t.child_nodes.size());
        t.child_nodes.push_back({coord(i, 0), coord(j, 1), coord(k, 2)});
      }
    }
  }
  for (int k = 0; k < c; ++k) {
    for (int j = 0; j < b; ++j) {
      for (int i = 0; i < a; ++i) {
        std::array<int, 8> child{};
        for (int corner = 0; corner < 8; ++corner) {
          const auto& s = kCornerSigns[corner];
          child[corner] = lattice(i + (s[0] > 0), j + (s[1] > 0), k + (s[2] > 0));
        }
        t.child_elements.push_back(child);
        t.child_boxes.emplace_back(Vec3(coord(i, 0), coord(j, 1), coord(k, 2)),
                                   Vec3(coord(i + 1, 0), coord(j + 1, 1), coord(k + 1, 2)));
      }
    }
  }
  return t;
}

const std::vector<RefinementTemplate>& builtin_templates() {
  static const std::vector<RefinementTemplate> templates = {
      regular_template(2, 2, 2), regular_template(3, 3, 3), regular_template(2, 3, 3),
      regular_template(3, 2, 3), regular_template(3, 3, 2),
  };
  return templates;
}

const RefinementTemplate& find_template(const std::string& name) {
  for (const auto& t : builtin_templates()) {
    if (t.name == name) return t;
  }
  int a = 0, b = 0, c = 0;
  char tail = 0;
  if (std::sscanf(name.c_str(), "%dx%dx%d%c", &a, &b, &c, &tail) != 3 || a < 1 || b < 1 || c < 1 || a > 8 ||
      b > 8 || c > 8 || a * b * c < 2) {
    throw InvalidArgument("unknown refinement template '" + name + "'");
  }
  // Other regular subdivisions are built on first use and kept for the process lifetime.
  static std::mutex mutex;
  static std::deque<RefinementTemplate> extra;
  const std::lock_guard<std::mutex> lock(mutex);
  for (const auto& t : extra) {
    if (t.name == name) return t;
  }
  extra.push_back(regular_template(a, b, c));
  return extra.back();
}

const RefinementTemplate& anisotropic_template(int axis) {
  switch (axis) {
    case 0: return find_template("2x3x3");
    case 1: return find_template("3x2x3");
    case 2: return find_template("3x3x2");
    default: throw InvalidArgument("anisotropic_template: axis must be 0, 1 or 2");
  }
}

RefinementRecord refine(HexMesh& mesh, ElemId e, const RefinementTemplate& tmpl) {
  if (!mesh.is_live(e)) throw StaleReference("refine: element is not live");
  const CornerPositions corners = mesh.rest_corners(e);
  const HexElement parent = mesh.element(e);

  RefinementRecord rec;
  rec.parent = e;
  rec.template_name = tmpl.name;
  std::vector<NodeId> local(8 + tmpl.child_nodes.size());
  for (int i = 0; i < 8; ++i) local[i] = parent.nodes[i];
  for (std::size_t i = 0; i < tmpl.child_nodes.size(); ++i) {
    const Vec3 p = interpolate(corners, tmpl.child_nodes[i]);
    NodeId id;
    if (auto existing = mesh.find_node(p)) {
      id = *existing;
    } else {
      id = mesh.add_node(p);
      rec.created_nodes.push_back({id, tmpl.child_nodes[i]});
    }
    local[8 + i] = id;
    rec.child_nodes.push_back(id);
  }
  for (const auto& child : tmpl.child_elements) {
    std::array<NodeId, 8> nodes;
    for (int c = 0; c < 8; ++c) nodes[c] = local[static_cast<std::size_t>(child[c])];
    rec.children.push_back(mesh.add_element(nodes, parent.level + 1, e, tmpl.name));
  }
  mesh.mutable_element(e).children = rec.children;
  mesh.kill_element(e);
  return rec;
}

void coarsen(HexMesh& mesh, const RefinementRecord& record) {
  for (ElemId c : record.children) {
    if (mesh.is_live(c)) continue;
    if (!mesh.element(c).children.empty()) {
      throw MustCoarsenChildrenFirst("coarsen: a child element has been refined further");
    }
    throw StaleReference("coarsen: child element is not live");
  }
  if (mesh.is_live(record.parent)) throw StaleReference("coarsen: parent is already live");
  mesh.revive_element(record.parent);
  for (ElemId c : record.children) mesh.kill_element(c);
  mesh.mutable_element(record.parent).children.clear();
}

std::pair<std::size_t, NaturalCoord> locate_in_children(const RefinementTemplate& tmpl,
                                                        const NaturalCoord& parent_coord) {
  const Vec3 p = parent_coord.clamped().vec();
  for (std::size_t i = 0; i < tmpl.child_boxes.size(); ++i) {
    const auto& [lo, hi] = tmpl.child_boxes[i];
    if ((p.array() >= lo.array() - 1e-12).all() && (p.array() <= hi.array() + 1e-12).all()) {
      const Vec3 local = (2.0 * (p - lo).array() / (hi - lo).array() - 1.0).matrix();
      return {i, NaturalCoord::from(local).clamped()};
    }
  }
  throw TopologyCorruption("locate_in_children: coordinate not covered by template");
}

NaturalCoord child_to_parent(const RefinementTemplate& tmpl, std::size_t child,
                             const NaturalCoord& child_coord) {
  const auto& [lo, hi] = tmpl.child_boxes.at(child);
  const Vec3 p = (lo.array() + 0.5 * (child_coord.vec().array() + 1.0) * (hi - lo).array()).matrix();
  return NaturalCoord::from(p);
}

const RefinementRecord& RefinementHistory::add(RefinementRecord record) {
  const ElemId key = record.parent;
  auto [it, inserted] = records_.insert_or_assign(key, std::move(record));
  (void)inserted;
  return it->second;
}

void RefinementHistory::remove(ElemId parent) { records_.erase(parent); }

const RefinementRecord* RefinementHistory::find(ElemId parent) const {
  auto it = records_.find(parent);
  return it == records_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------

namespace {

double snap(double v) {
  constexpr double kTol = 1e-10;
  if (std::abs(v - 1.0) < kTol) return 1.0;
  if (std::abs(v + 1.0) < kTol) return -1.0;
  if (std::abs(v) < kTol) return 0.0;
  return v;
}

}  // namespace

std::vector<SlaveNode> detect_t_junctions(const HexMesh& mesh) {
  const auto elems = mesh.live_elements();
  if (elems.empty()) return {};

  double cell = std::numeric_limits<double>::infinity();
  for (ElemId e : elems) {
    const auto c = mesh.rest_corners(e);
    Vec3 lo = c[0], hi = c[0];
    for (const auto& p : c) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    cell = std::min(cell, (hi - lo).minCoeff());
  }
  if (!(cell > 0.0)) throw DegenerateGeometry("detect_t_junctions: flat element");

  using Key = std::array<long long, 3>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
    }
  };
  auto key_of = [&](const Vec3& p) {
    return Key{static_cast<long long>(std::floor(p.x() / cell)),
               static_cast<long long>(std::floor(p.y() / cell)),
               static_cast<long long>(std::floor(p.z() / cell))};
  };
  std::unordered_map<Key, std::vector<NodeId>, KeyHash> buckets;
  for (NodeId n : mesh.live_nodes()) buckets[key_of(mesh.rest_position(n))].push_back(n);

  struct Candidate {
    ElemId host;
    int level = 0;
    NaturalCoord coord;
  };
  std::vector<std::optional<Candidate>> best(mesh.node_capacity());
  const double tol = 1e-9;

  for (ElemId e : elems) {
    const auto& el = mesh.element(e);
    const auto corners = mesh.rest_corners(e);
    Vec3 lo = corners[0], hi = corners[0];
    for (const auto& p : corners) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double pad = tol * (hi - lo).norm();
    const Key klo = key_of(lo.array() - pad);
    const Key khi = key_of(hi.array() + pad);
    for (long long i = klo[0]; i <= khi[0]; ++i) {
      for (long long j = klo[1]; j <= khi[1]; ++j) {
        for (long long k = klo[2]; k <= khi[2]; ++k) {
          auto it = buckets.find({i, j, k});
          if (it == buckets.end()) continue;
          for (NodeId n : it->second) {
            if (std::find(el.nodes.begin(), el.nodes.end(), n) != el.nodes.end()) continue;
            const Vec3& p = mesh.rest_position(n);
            if ((p.array() < lo.array() - pad).any() || (p.array() > hi.array() + pad).any()) continue;
            auto nc = cartesian_to_natural(corners, p, tol);
            if (!nc) continue;
            const Vec3 v = nc->vec();
            if (v.cwiseAbs().maxCoeff() < 1.0 - tol) continue;  // strictly interior
            auto& slot = best[n.index()];
            if (!slot || el.level < slot->level || (el.level == slot->level && e < slot->host)) {
              slot = Candidate{e, el.level, NaturalCoord{snap(v.x()), snap(v.y()), snap(v.z())}};
            }
          }
        }
      }
    }
  }

  std::vector<SlaveNode> out;
  for (std::size_t i = 0; i < best.size(); ++i) {
    if (!best[i]) continue;
    SlaveNode s;
    s.node = NodeId(static_cast<std::uint32_t>(i));
    s.host = best[i]->host;
    const ShapeValues w = shape_values(best[i]->coord);
    const auto& nodes = mesh.element(s.host).nodes;
    for (int c = 0; c < 8; ++c) {
      if (w[c] > 1e-12) s.masters.emplace_back(nodes[c], w[c]);
    }
    std::sort(s.masters.begin(), s.masters.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SlaveNode> resolve_chains(const std::vector<SlaveNode>& slaves) {
  std::map<NodeId, const SlaveNode*> by_node;
  for (const auto& s : slaves) by_node[s.node] = &s;

  enum class Mark { kNone, kActive, kDone };
  std::map<NodeId, Mark> mark;
  std::map<NodeId, std::map<NodeId, double>> resolved;

  std::function<const std::map<NodeId, double>&(NodeId)> visit =
      [&](NodeId n) -> const std::map<NodeId, double>& {
    auto& m = mark[n];
    if (m == Mark::kDone) return resolved[n];
    if (m == Mark::kActive) throw TopologyCorruption("resolve_chains: cyclic master dependency");
    m = Mark::kActive;
    std::map<NodeId, double> acc;
    for (const auto& [master, w] : by_node.at(n)->masters) {
      if (by_node.count(master)) {
        for (const auto& [mm, ww] : visit(master)) acc[mm] += w * ww;
      } else {
        acc[master] += w;
      }
    }
    mark[n] = Mark::kDone;
    return resolved[n] = std::move(acc);
  };

  std::vector<SlaveNode> out;
  out.reserve(slaves.size());
  for (const auto& s : slaves) {
    SlaveNode r;
    r.node = s.node;
    r.host = s.host;
    for (const auto& [m, w] : visit(s.node)) {
      if (w > 1e-14) r.masters.emplace_back(m, w);
    }
    out.push_back(std::move(r));
  }
  return out;
}

TransformationMatrix build_transformation(const std::vector<NodeId>& nodes, std::size_t node_capacity,
                                          const std::vector<SlaveNode>& resolved, int dofs_per_node) {
  if (dofs_per_node < 1) throw InvalidArgument("build_transformation: dofs_per_node must be >= 1");
  TransformationMatrix tm;
  tm.dofs_per_node = dofs_per_node;
  tm.slaves = resolved;
  DofMap& map = tm.map;
  map.nodes = nodes;
  map.full_index.assign(node_capacity, -1);
  map.reduced_index.assign(node_capacity, -1);
  std::vector<char> is_slave(node_capacity, 0);
  for (const auto& s : resolved) {
    if (s.node.index() >= node_capacity) throw InvalidArgument("build_transformation: slave out of range");
    is_slave[s.node.index()] = 1;
  }
  for (NodeId n : nodes) {
    map.full_index[n.index()] = map.num_full_nodes++;
    if (!is_slave[n.index()]) map.reduced_index[n.index()] = map.num_reduced_nodes++;
  }
  const int d = dofs_per_node;
  std::vector<Eigen::Triplet<double>> trips;
  for (NodeId n : nodes) {
    if (is_slave[n.index()]) continue;
    for (int k = 0; k < d; ++k) {
      trips.emplace_back(d * map.full_index[n.index()] + k, d * map.reduced_index[n.index()] + k, 1.0);
    }
  }
  for (const auto& s : resolved) {
    const Eigen::Index row = map.full_index[s.node.index()];
    if (row < 0) throw TopologyCorruption("build_transformation: slave is not a live node");
    for (const auto& [m, w] : s.masters) {
      if (m.index() >= node_capacity || is_slave[m.index()]) {
        throw TopologyCorruption("build_transformation: slave master is itself a slave");
      }
      const Eigen::Index col = map.reduced_index[m.index()];
      if (col < 0) throw TopologyCorruption("build_transformation: master is not a live node");
      for (int k = 0; k < d; ++k) trips.emplace_back(d * row + k, d * col + k, w);
    }
  }
  tm.t.resize(d * map.num_full_nodes, d * map.num_reduced_nodes);
  tm.t.setFromTriplets(trips.begin(), trips.end());
  return tm;
}

TransformationMatrix build_T(const HexMesh& mesh, const std::vector<SlaveNode>& resolved,
                             int dofs_per_node) {
  return build_transformation(mesh.live_nodes(), mesh.node_capacity(), resolved, dofs_per_node);
}

std::pair<SparseMatrix, VecX> reduce_system(const SparseMatrix& a_full, const VecX& f_full,
                                            const SparseMatrix& t) {
  if (a_full.rows() != t.rows() || a_full.cols() != t.rows() || f_full.size() != t.rows()) {
    throw InvalidArgument("reduce_system: dimension mismatch");
  }
  const SparseMatrix tt = t.transpose();
  SparseMatrix ar = tt * a_full * t;
  VecX fr = tt * f_full;
  return {std::move(ar), std::move(fr)};
}

VecX expand_solution(const SparseMatrix& t, const VecX& dv_reduced) {
  if (dv_reduced.size() != t.cols()) throw InvalidArgument("expand_solution: dimension mismatch");
  return t * dv_reduced;
}

}  // namespace hexadapt
