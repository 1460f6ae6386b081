#include "hexadapt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

namespace hexadapt {

bool NaturalCoord::inside(double tol) const {
  return std::abs(xi) <= 1.0 + tol && std::abs(eta) <= 1.0 + tol && std::abs(zeta) <= 1.0 + tol;
}

NaturalCoord NaturalCoord::clamped() const {
  return {std::clamp(xi, -1.0, 1.0), std::clamp(eta, -1.0, 1.0), std::clamp(zeta, -1.0, 1.0)};
}

ShapeValues shape_values(const NaturalCoord& c) {
  ShapeValues n{};
  for (int i = 0; i < 8; ++i) {
    const auto& s = kCornerSigns[i];
    n[i] = 0.125 * (1.0 + s[0] * c.xi) * (1.0 + s[1] * c.eta) * (1.0 + s[2] * c.zeta);
  }
  return n;
}

ShapeGradients shape_gradients(const NaturalCoord& c) {
  ShapeGradients g{};
  for (int i = 0; i < 8; ++i) {
    const auto& s = kCornerSigns[i];
    const double a = 1.0 + s[0] * c.xi;
    const double b = 1.0 + s[1] * c.eta;
    const double d = 1.0 + s[2] * c.zeta;
    g[i] = 0.125 * Vec3(s[0] * b * d, s[1] * a * d, s[2] * a * b);
  }
  return g;
}

Vec3 interpolate(const CornerPositions& corners, const NaturalCoord& c) {
  const ShapeValues n = shape_values(c);
  Vec3 x = Vec3::Zero();
  for (int i = 0; i < 8; ++i) x += n[i] * corners[i];
  return x;
}

Mat3 jacobian(const CornerPositions& corners, const NaturalCoord& c) {
  const ShapeGradients g = shape_gradients(c);
  Mat3 j = Mat3::Zero();
  for (int i = 0; i < 8; ++i) j += corners[i] * g[i].transpose();
  return j;
}

std::optional<NaturalCoord> cartesian_to_natural(const CornerPositions& corners,
                                                 const Vec3& point, double tol) {
  Vec3 c = Vec3::Zero();
  double scale = 0.0;
  for (const auto& p : corners) scale = std::max(scale, (p - corners[0]).norm());
  if (scale <= 0.0) return std::nullopt;
  for (int it = 0; it < 50; ++it) {
    const NaturalCoord nc = NaturalCoord::from(c);
    const Vec3 r = interpolate(corners, nc) - point;
    if (r.norm() <= 1e-14 * scale) break;
    const Mat3 j = jacobian(corners, nc);
    const double det = j.determinant();
    if (!(std::abs(det) > 0.0)) return std::nullopt;
    const Vec3 step = j.inverse() * r;
    c -= step;
    if (!c.allFinite() || c.cwiseAbs().maxCoeff() > 10.0) return std::nullopt;
    if (step.norm() < 1e-15) break;
  }
  const NaturalCoord nc = NaturalCoord::from(c);
  if (!nc.inside(tol)) return std::nullopt;
  return nc;
}

// ---------------------------------------------------------------------------

std::size_t HexMesh::CellKeyHash::operator()(const CellKey& k) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (long long v : k) {
    h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

HexMesh::CellKey HexMesh::cell_of(const Vec3& p) const {
  return {static_cast<long long>(std::floor(p.x() / cell_size_)),
          static_cast<long long>(std::floor(p.y() / cell_size_)),
          static_cast<long long>(std::floor(p.z() / cell_size_))};
}

void HexMesh::index_node(NodeId n) { node_index_[cell_of(rest_[n.index()])].push_back(n); }

void HexMesh::unindex_node(NodeId n) {
  auto it = node_index_.find(cell_of(rest_[n.index()]));
  if (it == node_index_.end()) return;
  auto& v = it->second;
  v.erase(std::remove(v.begin(), v.end(), n), v.end());
  if (v.empty()) node_index_.erase(it);
}

void HexMesh::rebuild_index() {
  node_index_.clear();
  for (std::size_t i = 0; i < rest_.size(); ++i) {
    if (node_live_[i]) index_node(NodeId(static_cast<std::uint32_t>(i)));
  }
}

void HexMesh::set_merge_tolerance(double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("merge tolerance must be positive");
  merge_tol_ = tol;
  cell_size_ = 1e3 * tol;
  rebuild_index();
}

NodeId HexMesh::add_node(const Vec3& rest_position) {
  const NodeId id(static_cast<std::uint32_t>(rest_.size()));
  rest_.push_back(rest_position);
  node_live_.push_back(true);
  adjacency_.emplace_back();
  ++num_live_nodes_;
  index_node(id);
  return id;
}

ElemId HexMesh::add_element(const std::array<NodeId, 8>& nodes, int level, ElemId parent,
                            std::string template_name) {
  for (int i = 0; i < 8; ++i) {
    if (!is_live(nodes[i])) throw InvalidArgument("add_element: dead or invalid node");
    for (int j = 0; j < i; ++j) {
      if (nodes[i] == nodes[j]) throw InvalidArgument("add_element: repeated node");
    }
  }
  CornerPositions c;
  for (int i = 0; i < 8; ++i) c[i] = rest_[nodes[i].index()];
  if (!(jacobian(c, {}).determinant() > 0.0)) {
    throw DegenerateGeometry("add_element: non-positive Jacobian at element center");
  }
  const ElemId id(static_cast<std::uint32_t>(elements_.size()));
  HexElement el;
  el.nodes = nodes;
  el.level = level;
  el.parent = parent;
  el.template_name = std::move(template_name);
  el.live = true;
  elements_.push_back(std::move(el));
  for (NodeId n : nodes) {
    auto& adj = adjacency_[n.index()];
    adj.insert(std::upper_bound(adj.begin(), adj.end(), id), id);
  }
  ++num_live_elements_;
  return id;
}

void HexMesh::kill_element(ElemId e) {
  if (!is_live(e)) throw StaleReference("kill_element: element is not live");
  auto& el = elements_[e.index()];
  el.live = false;
  --num_live_elements_;
  for (NodeId n : el.nodes) {
    auto& adj = adjacency_[n.index()];
    adj.erase(std::remove(adj.begin(), adj.end(), e), adj.end());
    if (adj.empty() && node_live_[n.index()]) {
      node_live_[n.index()] = false;
      --num_live_nodes_;
      unindex_node(n);
    }
  }
}

void HexMesh::revive_element(ElemId e) {
  if (!e.valid() || e.index() >= elements_.size()) throw StaleReference("revive_element: bad id");
  auto& el = elements_[e.index()];
  if (el.live) return;
  for (NodeId n : el.nodes) {
    if (!node_live_[n.index()]) {
      throw TopologyCorruption("revive_element: element references a tombstoned node");
    }
  }
  el.live = true;
  ++num_live_elements_;
  for (NodeId n : el.nodes) {
    auto& adj = adjacency_[n.index()];
    adj.insert(std::upper_bound(adj.begin(), adj.end(), e), e);
  }
}

bool HexMesh::is_live(NodeId n) const {
  return n.valid() && n.index() < node_live_.size() && node_live_[n.index()];
}

bool HexMesh::is_live(ElemId e) const {
  return e.valid() && e.index() < elements_.size() && elements_[e.index()].live;
}

const Vec3& HexMesh::rest_position(NodeId n) const {
  if (!n.valid() || n.index() >= rest_.size()) throw StaleReference("rest_position: bad node id");
  return rest_[n.index()];
}

const HexElement& HexMesh::element(ElemId e) const {
  if (!e.valid() || e.index() >= elements_.size()) throw StaleReference("element: bad id");
  return elements_[e.index()];
}

HexElement& HexMesh::mutable_element(ElemId e) {
  if (!e.valid() || e.index() >= elements_.size()) throw StaleReference("element: bad id");
  return elements_[e.index()];
}

std::span<const ElemId> HexMesh::elements_of(NodeId n) const {
  if (!n.valid() || n.index() >= adjacency_.size()) return {};
  return adjacency_[n.index()];
}

std::vector<ElemId> HexMesh::live_elements() const {
  std::vector<ElemId> out;
  out.reserve(num_live_elements_);
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    if (elements_[i].live) out.emplace_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

std::vector<NodeId> HexMesh::live_nodes() const {
  std::vector<NodeId> out;
  out.reserve(num_live_nodes_);
  for (std::size_t i = 0; i < node_live_.size(); ++i) {
    if (node_live_[i]) out.emplace_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

CornerPositions HexMesh::rest_corners(ElemId e) const {
  const auto& el = element(e);
  CornerPositions c;
  for (int i = 0; i < 8; ++i) c[i] = rest_[el.nodes[i].index()];
  return c;
}

CornerPositions HexMesh::corners(ElemId e, const NodalField& positions) const {
  const auto& el = element(e);
  CornerPositions c;
  for (int i = 0; i < 8; ++i) c[i] = positions[el.nodes[i].index()];
  return c;
}

std::optional<NodeId> HexMesh::find_node(const Vec3& p) const {
  const CellKey base = cell_of(p);
  std::optional<NodeId> best;
  double best_d = merge_tol_;
  for (long long dx = -1; dx <= 1; ++dx) {
    for (long long dy = -1; dy <= 1; ++dy) {
      for (long long dz = -1; dz <= 1; ++dz) {
        auto it = node_index_.find({base[0] + dx, base[1] + dy, base[2] + dz});
        if (it == node_index_.end()) continue;
        for (NodeId n : it->second) {
          const double d = (rest_[n.index()] - p).norm();
          if (d <= best_d && (!best || d < best_d || n < *best)) {
            best = n;
            best_d = d;
          }
        }
      }
    }
  }
  return best;
}

std::vector<std::vector<ElemId>> HexMesh::rebuild_adjacency() const {
  std::vector<std::vector<ElemId>> adj(rest_.size());
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    if (!elements_[i].live) continue;
    for (NodeId n : elements_[i].nodes) adj[n.index()].emplace_back(static_cast<std::uint32_t>(i));
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

// ---------------------------------------------------------------------------

HexMesh build_grid(const Vec3& origin, const Vec3& extents, const std::array<int, 3>& resolution) {
  for (int k = 0; k < 3; ++k) {
    if (resolution[k] < 1) throw InvalidArgument("build_grid: resolution components must be >= 1");
    if (!(extents[k] > 0.0)) throw InvalidArgument("build_grid: extents must be positive");
  }
  const int nx = resolution[0], ny = resolution[1], nz = resolution[2];
  HexMesh mesh;
  mesh.set_merge_tolerance(1e-9 * extents.norm());
  const Vec3 h(extents.x() / nx, extents.y() / ny, extents.z() / nz);
  std::vector<NodeId> ids;
  ids.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        // Last layer pinned to origin + extents exactly.
        Vec3 p(i == nx ? origin.x() + extents.x() : origin.x() + i * h.x(),
               j == ny ? origin.y() + extents.y() : origin.y() + j * h.y(),
               k == nz ? origin.z() + extents.z() : origin.z() + k * h.z());
        ids.push_back(mesh.add_node(p));
      }
    }
  }
  auto node = [&](int i, int j, int k) {
    return ids[static_cast<std::size_t>(i) + (nx + 1) * (j + static_cast<std::size_t>(ny + 1) * k)];
  };
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        std::array<NodeId, 8> n;
        for (int c = 0; c < 8; ++c) {
          const auto& s = kCornerSigns[c];
          n[c] = node(i + (s[0] > 0), j + (s[1] > 0), k + (s[2] > 0));
        }
        mesh.add_element(n);
      }
    }
  }
  return mesh;
}

std::size_t carve(HexMesh& mesh, const std::function<bool(const Vec3&)>& strictly_inside) {
  std::size_t removed = 0;
  for (ElemId e : mesh.live_elements()) {
    const auto c = mesh.rest_corners(e);
    if (strictly_inside(interpolate(c, {}))) continue;
    const bool any_corner_inside =
        std::any_of(c.begin(), c.end(), [&](const Vec3& p) { return strictly_inside(p); });
    if (any_corner_inside) continue;
    mesh.kill_element(e);
    ++removed;
  }
  return removed;
}

Vec3 natural_to_cartesian(const HexMesh& mesh, ElemId e, const NaturalCoord& c) {
  if (!mesh.is_live(e)) throw StaleReference("natural_to_cartesian: element is not live");
  return interpolate(mesh.rest_corners(e), c);
}

std::vector<ElemId> node_patch(const HexMesh& mesh, NodeId n) {
  const auto span = mesh.elements_of(n);
  return {span.begin(), span.end()};
}

double element_volume(const CornerPositions& corners) {
  const double g = 1.0 / std::sqrt(3.0);
  double v = 0.0;
  for (int q = 0; q < 8; ++q) {
    const auto& s = kCornerSigns[q];
    v += jacobian(corners, {s[0] * g, s[1] * g, s[2] * g}).determinant();
  }
  return v;
}

std::optional<PointLocation> locate_point(const HexMesh& mesh, const NodalField& positions,
                                          const Vec3& p, double tol) {
  for (ElemId e : mesh.live_elements()) {
    const auto c = mesh.corners(e, positions);
    Vec3 lo = c[0], hi = c[0];
    for (const auto& x : c) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    const double pad = tol * (hi - lo).norm() + 1e-300;
    if ((p.array() < lo.array() - pad).any() || (p.array() > hi.array() + pad).any()) continue;
    if (auto nc = cartesian_to_natural(c, p, tol)) return PointLocation{e, nc->clamped()};
  }
  return std::nullopt;
}

NodalField rest_field(const HexMesh& mesh) { return mesh.rest_positions(); }

}  // namespace hexadapt
