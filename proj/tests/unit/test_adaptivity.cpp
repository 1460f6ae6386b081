#include <gtest/gtest.h>

#include <random>

#include "hexadapt/adaptivity.hpp"
#include "hexadapt/tissue.hpp"

using namespace hexadapt;

namespace {

const Mat3 kGradient = (Mat3() << 1e-3, 2e-4, -1e-4, 3e-4, -2e-3, 5e-4, 1e-4, 0.0, 1.5e-3).finished();
const Vec3 kShift(1e-3, -2e-3, 5e-4);

Vec3 affine(const Vec3& p) { return kGradient * p + kShift; }

struct MeshSnapshot {
  std::vector<std::pair<std::uint32_t, std::array<std::uint32_t, 8>>> elements;
  std::vector<std::pair<std::uint32_t, Vec3>> nodes;
  bool operator==(const MeshSnapshot& o) const {
    if (elements != o.elements || nodes.size() != o.nodes.size()) return false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].first != o.nodes[i].first || nodes[i].second != o.nodes[i].second) return false;
    }
    return true;
  }
};

MeshSnapshot snapshot(const HexMesh& m) {
  MeshSnapshot s;
  for (ElemId e : m.live_elements()) {
    std::array<std::uint32_t, 8> n;
    for (int i = 0; i < 8; ++i) n[static_cast<std::size_t>(i)] = m.element(e).nodes[static_cast<std::size_t>(i)].value;
    s.elements.emplace_back(e.value, n);
  }
  for (NodeId n : m.live_nodes()) s.nodes.emplace_back(n.value, m.rest_position(n));
  return s;
}

}  // namespace

TEST(Templates, ChildrenTileTheParent) {
  const HexMesh base = build_grid(Vec3::Zero(), Vec3(1.0, 2.0, 1.5), {1, 1, 1});
  for (const auto& t : builtin_templates()) {
    HexMesh m = base;
    const ElemId parent = m.live_elements().front();
    const double v0 = element_volume(m.rest_corners(parent));
    const RefinementRecord r = refine(m, parent, t);
    EXPECT_EQ(r.children.size(), static_cast<std::size_t>(t.divisions[0] * t.divisions[1] * t.divisions[2])) << t.name;
    double v = 0.0;
    for (ElemId c : r.children) v += element_volume(m.rest_corners(c));
    EXPECT_NEAR(v, v0, 1e-12 * v0) << t.name;
    for (ElemId c : r.children) EXPECT_EQ(m.element(c).level, 1);
  }
}

TEST(Templates, RegularNamesAndLookup) {
  EXPECT_EQ(find_template("2x2x1").divisions, (std::array<int, 3>{2, 2, 1}));
  EXPECT_EQ(anisotropic_template(1).name, "3x2x3");
  EXPECT_THROW((void)find_template("1x1x1"), InvalidArgument);
  EXPECT_THROW((void)find_template("bogus"), InvalidArgument);
}

TEST(Templates, ChildLocationRoundTrip) {
  const RefinementTemplate& t = find_template("2x3x3");
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 40; ++k) {
    const NaturalCoord p{u(rng), u(rng), u(rng)};
    const auto [child, local] = locate_in_children(t, p);
    EXPECT_TRUE(local.inside());
    EXPECT_LT((child_to_parent(t, child, local).vec() - p.vec()).norm(), 1e-14);
  }
}

TEST(HangingNodes, SlavesInterpolateTheirHost) {
  HexMesh m = build_grid(Vec3::Zero(), Vec3(2.0, 1.0, 1.0), {2, 1, 1});
  refine(m, m.live_elements().front(), find_template("2x2x2"));
  const auto slaves = resolve_chains(detect_t_junctions(m));
  // Face x = 1 shared with the coarse neighbour: 4 edge midpoints and the face center.
  EXPECT_EQ(slaves.size(), 5u);
  for (const auto& s : slaves) {
    double sum = 0.0;
    Vec3 p = Vec3::Zero();
    for (const auto& [n, w] : s.masters) {
      sum += w;
      p += w * m.rest_position(n);
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
    EXPECT_LT((p - m.rest_position(s.node)).norm(), 1e-14);
  }
}

TEST(HangingNodes, ChainsResolveToIndependentNodes) {
  HexMesh m = build_grid(Vec3::Zero(), Vec3(2.0, 1.0, 1.0), {2, 1, 1});
  const RefinementRecord r = refine(m, m.live_elements().front(), find_template("2x2x2"));
  // Refine a child touching the coarse neighbour again: its face nodes hang
  // on slaves of the first level.
  ElemId touching;
  for (ElemId c : r.children) {
    double xmax = -1.0;
    for (const Vec3& p : m.rest_corners(c)) xmax = std::max(xmax, p.x());
    if (xmax > 0.99) touching = c;
  }
  refine(m, touching, find_template("2x2x2"));
  const auto slaves = resolve_chains(detect_t_junctions(m));
  std::vector<char> is_slave(m.node_capacity(), 0);
  for (const auto& s : slaves) is_slave[s.node.index()] = 1;
  for (const auto& s : slaves) {
    for (const auto& [n, w] : s.masters) EXPECT_FALSE(is_slave[n.index()]);
  }
  const TransformationMatrix tm = build_T(m, slaves);
  // Rows of T are partitions of unity per component.
  const VecX ones = tm.t * VecX::Ones(tm.t.cols());
  EXPECT_LT((ones - VecX::Ones(ones.size())).lpNorm<Eigen::Infinity>(), 1e-14);
}

// Hanging-node patch test: affine boundary data on a mesh with one refined
// element reproduces the affine field at every node.
TEST(HangingNodes, PatchTest) {
  HexMesh mesh = build_grid(Vec3::Zero(), Vec3(3.0, 3.0, 3.0), {3, 3, 3});
  ElemId middle;
  for (ElemId e : mesh.live_elements()) {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : mesh.rest_corners(e)) c += p / 8.0;
    if ((c - Vec3(1.5, 1.5, 1.5)).norm() < 1e-9) middle = e;
  }
  TissueBody body(mesh, Material{1e3, 0.3, 1.0, 0.0, 0.0}, false);
  body.refine(middle, find_template("2x2x2"));
  body.update_rotations();
  const TransformationMatrix& tm = body.reduction();
  ASSERT_FALSE(tm.slaves.empty());

  SteppingSystem sys;
  sys.a = body.stiffness();
  sys.b = VecX::Zero(sys.a.rows());
  sys.reduction = tm.t;
  for (NodeId n : tm.map.nodes) {
    const Eigen::Index r = tm.map.reduced_index[n.index()];
    const Vec3 p = body.mesh().rest_position(n);
    const bool boundary = (p.array() < 1e-9).any() || (p.array() > 3.0 - 1e-9).any();
    if (r < 0 || !boundary) continue;
    for (int k = 0; k < 3; ++k) sys.dirichlet.add(3 * r + k, affine(p)[k]);
  }
  SolverOptions opt;
  opt.tolerance = 1e-14;
  const VecX u = solve_reduced(sys, opt);
  for (NodeId n : tm.map.nodes) {
    const Vec3 p = body.mesh().rest_position(n);
    EXPECT_LT((u.segment<3>(3 * tm.map.full_index[n.index()]) - affine(p)).norm(), 1e-8 * affine(p).norm());
  }
  // Slave values equal their master interpolation exactly.
  for (const auto& s : tm.slaves) {
    Vec3 interp = Vec3::Zero();
    for (const auto& [n, w] : s.masters) interp += w * u.segment<3>(3 * tm.map.full_index[n.index()]);
    EXPECT_LT((u.segment<3>(3 * tm.map.full_index[s.node.index()]) - interp).norm(), 1e-15);
  }
}

TEST(Refinement, CoarsenRequiresLeafChildren) {
  HexMesh m = build_grid(Vec3::Zero(), Vec3::Ones(), {1, 1, 1});
  const RefinementRecord outer = refine(m, m.live_elements().front(), find_template("2x2x2"));
  refine(m, outer.children.front(), find_template("2x2x2"));
  EXPECT_THROW(coarsen(m, outer), MustCoarsenChildrenFirst);
}

// Any refine sequence followed by its reverse restores the exact mesh.
TEST(Refinement, ReverseSequenceRestoresMesh) {
  for (unsigned seed : {1u, 2u, 3u, 4u}) {
    HexMesh m = build_grid(Vec3::Zero(), Vec3(2.0, 1.0, 1.0), {3, 2, 2});
    const MeshSnapshot before = snapshot(m);
    std::mt19937 rng(seed);
    const auto& templates = builtin_templates();
    std::vector<RefinementRecord> done;
    for (int k = 0; k < 12; ++k) {
      std::vector<ElemId> leaves;
      for (ElemId e : m.live_elements()) {
        if (m.element(e).level < 2) leaves.push_back(e);
      }
      const ElemId e = leaves[rng() % leaves.size()];
      done.push_back(refine(m, e, templates[rng() % templates.size()]));
    }
    for (auto it = done.rbegin(); it != done.rend(); ++it) coarsen(m, *it);
    EXPECT_TRUE(snapshot(m) == before) << "seed " << seed;
    EXPECT_EQ(m.adjacency(), m.rebuild_adjacency());
  }
}
