#pragma once

// Hexahedral mesh with trilinear shape functions and tombstoned ids.
//
// Corner ordering follows the VTK hexahedron convention, with natural
// coordinates (xi, eta, zeta):
//
//   0 (-,-,-)  1 (+,-,-)  2 (+,+,-)  3 (-,+,-)
//   4 (-,-,+)  5 (+,-,+)  6 (+,+,+)  7 (-,+,+)
//
// Every element must have a positive Jacobian determinant at its center in
// the rest configuration; add_element() enforces this.

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hexadapt/common.hpp"

namespace hexadapt {

struct NaturalCoord {
  double xi = 0.0;
  double eta = 0.0;
  double zeta = 0.0;

  [[nodiscard]] Vec3 vec() const { return {xi, eta, zeta}; }
  static NaturalCoord from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
  [[nodiscard]] bool inside(double tol = 1e-12) const;
  [[nodiscard]] NaturalCoord clamped() const;
};

inline constexpr std::array<std::array<int, 3>, 8> kCornerSigns = {{
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
}};

using ShapeValues = std::array<double, 8>;
using ShapeGradients = std::array<Vec3, 8>;
using CornerPositions = std::array<Vec3, 8>;

/// Trilinear weights N_i(c). They sum to one everywhere.
ShapeValues shape_values(const NaturalCoord& c);

/// dN_i/d(xi,eta,zeta).
ShapeGradients shape_gradients(const NaturalCoord& c);

/// Weighted sum of corner positions by shape_values(c).
Vec3 interpolate(const CornerPositions& corners, const NaturalCoord& c);

/// Jacobian d x / d(xi,eta,zeta); column k is the derivative along axis k.
Mat3 jacobian(const CornerPositions& corners, const NaturalCoord& c);

/// Inverts the trilinear map by Newton iteration. Returns nullopt when the
/// iteration fails or the point lies farther than `tol` outside the cube.
std::optional<NaturalCoord> cartesian_to_natural(const CornerPositions& corners,
                                                 const Vec3& point, double tol = 1e-9);

struct HexElement {
  std::array<NodeId, 8> nodes;
  int level = 0;
  ElemId parent;
  std::vector<ElemId> children;
  // Name of the template that produced this element ("" for root elements).
  std::string template_name;
  bool live = true;
};

/// Per-node vector storage indexed by NodeId::index(); sized to node capacity.
using NodalField = std::vector<Vec3>;

class HexMesh {
 public:
  HexMesh() = default;

  /// Adds a node with a fresh id. The node is live until no live element uses it
  /// (orphans are tombstoned by kill_element).
  NodeId add_node(const Vec3& rest_position);

  /// Adds a live element. Throws DegenerateGeometry for a non-positive center
  /// Jacobian and InvalidArgument for repeated or dead nodes.
  ElemId add_element(const std::array<NodeId, 8>& nodes, int level = 0, ElemId parent = {},
                     std::string template_name = {});

  /// Removes an element from the live set and tombstones orphaned nodes.
  void kill_element(ElemId e);

  /// Brings a retained (dead) element back; its nodes must all be live.
  void revive_element(ElemId e);

  [[nodiscard]] bool is_live(NodeId n) const;
  [[nodiscard]] bool is_live(ElemId e) const;

  [[nodiscard]] const Vec3& rest_position(NodeId n) const;
  [[nodiscard]] const HexElement& element(ElemId e) const;
  HexElement& mutable_element(ElemId e);

  /// Live elements incident to n, sorted by id.
  [[nodiscard]] std::span<const ElemId> elements_of(NodeId n) const;

  [[nodiscard]] std::vector<ElemId> live_elements() const;
  [[nodiscard]] std::vector<NodeId> live_nodes() const;
  [[nodiscard]] std::size_t num_live_elements() const { return num_live_elements_; }
  [[nodiscard]] std::size_t num_live_nodes() const { return num_live_nodes_; }
  [[nodiscard]] std::size_t node_capacity() const { return rest_.size(); }
  [[nodiscard]] std::size_t element_capacity() const { return elements_.size(); }

  [[nodiscard]] CornerPositions rest_corners(ElemId e) const;
  [[nodiscard]] CornerPositions corners(ElemId e, const NodalField& positions) const;

  /// Live node at `p` within the merge tolerance, if any.
  [[nodiscard]] std::optional<NodeId> find_node(const Vec3& p) const;

  /// Absolute distance under which two rest positions are the same node.
  void set_merge_tolerance(double tol);
  [[nodiscard]] double merge_tolerance() const { return merge_tol_; }

  /// Adjacency recomputed from element->node incidence, for consistency checks.
  [[nodiscard]] std::vector<std::vector<ElemId>> rebuild_adjacency() const;
  [[nodiscard]] const std::vector<std::vector<ElemId>>& adjacency() const { return adjacency_; }

  /// Rest positions of all node slots (dead slots keep their last value).
  [[nodiscard]] const std::vector<Vec3>& rest_positions() const { return rest_; }

 private:
  using CellKey = std::array<long long, 3>;
  struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept;
  };

  [[nodiscard]] CellKey cell_of(const Vec3& p) const;
  void index_node(NodeId n);
  void unindex_node(NodeId n);
  void rebuild_index();

  std::vector<Vec3> rest_;
  std::vector<bool> node_live_;
  std::vector<HexElement> elements_;
  std::vector<std::vector<ElemId>> adjacency_;
  std::size_t num_live_nodes_ = 0;
  std::size_t num_live_elements_ = 0;

  double merge_tol_ = 1e-9;
  double cell_size_ = 1e-6;
  std::unordered_map<CellKey, std::vector<NodeId>, CellKeyHash> node_index_;
};

/// Regular grid of nx*ny*nz level-0 hexahedra.
HexMesh build_grid(const Vec3& origin, const Vec3& extents, const std::array<int, 3>& resolution);

/// Tombstones every element lying fully outside the domain described by
/// `inside` (non-conforming boundary treatment: no cut-cell integration).
/// An element is outside when its centroid is outside and no corner is
/// strictly inside. Returns the number of removed elements.
std::size_t carve(HexMesh& mesh, const std::function<bool(const Vec3&)>& strictly_inside);

/// Rest-configuration natural -> cartesian map of a live element.
Vec3 natural_to_cartesian(const HexMesh& mesh, ElemId e, const NaturalCoord& c);

/// All live elements incident to n (copy, sorted by id).
std::vector<ElemId> node_patch(const HexMesh& mesh, NodeId n);

/// Rest-configuration volume by 2x2x2 Gauss quadrature.
double element_volume(const CornerPositions& corners);

struct PointLocation {
  ElemId element;
  NaturalCoord coord;
};

/// Finds a live element containing `p` for the given nodal positions.
/// Ties resolve to the smallest element id.
std::optional<PointLocation> locate_point(const HexMesh& mesh, const NodalField& positions,
                                          const Vec3& p, double tol = 1e-9);

/// Rest positions as a NodalField (copy).
NodalField rest_field(const HexMesh& mesh);

}  // namespace hexadapt
