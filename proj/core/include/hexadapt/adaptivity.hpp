#pragma once

// Template-based reversible h-refinement and hanging-node condensation.
//
// A template subdivides the reference cube; child nodes are placed through
// the parent's trilinear map, so refinement works on any hexahedron.
// Hanging nodes (nodes on a face or edge of a coarser live element) are
// slaved to that element's corners with trilinear weights and condensed out
// through u_f = T u_r.

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "hexadapt/mesh.hpp"

namespace hexadapt {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct RefinementTemplate {
  std::string name;
  std::array<int, 3> divisions{1, 1, 1};
  std::vector<NaturalCoord> child_nodes;
  /// Indices 0..7 are the parent corners, 8.. index child_nodes.
  std::vector<std::array<int, 8>> child_elements;
  /// Natural-coordinate box [lo, hi] of each child inside the parent.
  std::vector<std::pair<Vec3, Vec3>> child_boxes;
};

/// Regular a x b x c subdivision, named "axbxc".
RefinementTemplate regular_template(int a, int b, int c);

/// 2x2x2, 3x3x3 and the three axis permutations of the anisotropic 2x3x3.
const std::vector<RefinementTemplate>& builtin_templates();

/// Looks up a template by name: a builtin one, or any regular "axbxc"
/// subdivision (1..8 per axis). Throws InvalidArgument otherwise.
const RefinementTemplate& find_template(const std::string& name);

/// Anisotropic template whose single bisected axis is `axis` (0, 1, 2):
/// axis 0 -> "2x3x3", 1 -> "3x2x3", 2 -> "3x3x2".
const RefinementTemplate& anisotropic_template(int axis);

struct CreatedNode {
  NodeId id;
  NaturalCoord coord;  // in the refined parent
};

struct RefinementRecord {
  ElemId parent;
  std::string template_name;
  std::vector<CreatedNode> created_nodes;
  /// Every child-node id in template order (created or reused).
  std::vector<NodeId> child_nodes;
  std::vector<ElemId> children;
};

/// Replaces `e` by the template children. Nodes already present at a child
/// node position (shared with a refined neighbor) are reused.
RefinementRecord refine(HexMesh& mesh, ElemId e, const RefinementTemplate& tmpl);

/// Restores the parent and removes the children plus nodes no longer used.
/// Throws MustCoarsenChildrenFirst when a child has been refined further.
void coarsen(HexMesh& mesh, const RefinementRecord& record);

/// Child index and child-local coordinate of a parent natural coordinate.
std::pair<std::size_t, NaturalCoord> locate_in_children(const RefinementTemplate& tmpl,
                                                        const NaturalCoord& parent_coord);

/// Parent natural coordinate of a child-local coordinate.
NaturalCoord child_to_parent(const RefinementTemplate& tmpl, std::size_t child,
                             const NaturalCoord& child_coord);

/// Bookkeeping of live refinements, keyed by parent element.
class RefinementHistory {
 public:
  const RefinementRecord& add(RefinementRecord record);
  void remove(ElemId parent);
  [[nodiscard]] const RefinementRecord* find(ElemId parent) const;
  [[nodiscard]] const std::map<ElemId, RefinementRecord>& records() const { return records_; }

 private:
  std::map<ElemId, RefinementRecord> records_;
};

struct SlaveNode {
  NodeId node;
  ElemId host;  // coarse element the node hangs on
  std::vector<std::pair<NodeId, double>> masters;
};

/// Every live node lying on a face or edge (not at a corner) of a live
/// element; the coarsest such element hosts it.
std::vector<SlaveNode> detect_t_junctions(const HexMesh& mesh);

/// Composes slave-of-slave chains into weights on independent nodes.
/// Throws TopologyCorruption on a cyclic dependency.
std::vector<SlaveNode> resolve_chains(const std::vector<SlaveNode>& slaves);

/// DOF numbering: full space = live nodes in id order, reduced = non-slaves.
struct DofMap {
  std::vector<NodeId> nodes;
  std::vector<Eigen::Index> full_index;     // by node slot, -1 if dead
  std::vector<Eigen::Index> reduced_index;  // by node slot, -1 if slave or dead
  Eigen::Index num_full_nodes = 0;
  Eigen::Index num_reduced_nodes = 0;
};

struct TransformationMatrix {
  SparseMatrix t;  // full dofs x reduced dofs
  DofMap map;
  std::vector<SlaveNode> slaves;  // resolved
  int dofs_per_node = 3;
};

/// Generic construction from an ordered node list. Requires resolved slaves.
TransformationMatrix build_transformation(const std::vector<NodeId>& nodes, std::size_t node_capacity,
                                          const std::vector<SlaveNode>& resolved, int dofs_per_node);

/// T for the live mesh. Throws TopologyCorruption if a master is a slave.
TransformationMatrix build_T(const HexMesh& mesh, const std::vector<SlaveNode>& resolved,
                             int dofs_per_node = 3);

/// A_r = T^T A_f T, f_r = T^T f_f.
std::pair<SparseMatrix, VecX> reduce_system(const SparseMatrix& a_full, const VecX& f_full,
                                            const SparseMatrix& t);

/// dv_f = T dv_r.
VecX expand_solution(const SparseMatrix& t, const VecX& dv_reduced);

}  // namespace hexadapt
