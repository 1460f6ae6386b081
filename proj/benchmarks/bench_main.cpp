// Micro benchmarks for the hot kernels of a simulation step.

#include <benchmark/benchmark.h>

#include <random>

#include "hexadapt/adaptivity.hpp"
#include "hexadapt/corotational.hpp"
#include "hexadapt/error_estimator.hpp"
#include "hexadapt/interaction.hpp"
#include "hexadapt/tissue.hpp"

using namespace hexadapt;

namespace {

Material soft() {
  Material m;
  m.young_modulus = 1e4;
  m.poisson_ratio = 0.45;
  m.density = 1000.0;
  return m;
}

HexMesh grid(int n) { return build_grid(Vec3::Zero(), Vec3(1.0, 1.0, 1.0), {n, n, n}); }

// Sheared positions so stresses are not trivially zero.
NodalField sheared(const HexMesh& mesh) {
  NodalField x = rest_field(mesh);
  for (auto& p : x) p.x() += 0.01 * p.y() * p.y() + 0.005 * p.z();
  return x;
}

void BM_ElementStiffness(benchmark::State& state) {
  const HexMesh mesh = grid(1);
  const Material mat = soft();
  const ElemId e = mesh.live_elements().front();
  for (auto _ : state) benchmark::DoNotOptimize(element_stiffness(mesh, e, mat));
}
BENCHMARK(BM_ElementStiffness);

void BM_ElementRotation(benchmark::State& state) {
  CornerPositions rest, cur;
  const Mat3 r = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  constexpr int kx[8] = {0, 1, 1, 0, 0, 1, 1, 0}, ky[8] = {0, 0, 1, 1, 0, 0, 1, 1};
  for (int i = 0; i < 8; ++i) {
    rest[i] = Vec3(kx[i], ky[i], i / 4);
    cur[i] = r * rest[i] + Vec3(0.01 * i, 0.0, 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(element_rotation(rest, cur));
}
BENCHMARK(BM_ElementRotation);

void BM_AssembleStiffness(benchmark::State& state) {
  TissueBody body(grid(static_cast<int>(state.range(0))), soft());
  for (auto _ : state) {
    body.update_rotations();
    benchmark::DoNotOptimize(body.stiffness());
  }
  state.counters["dofs"] = static_cast<double>(body.num_dofs());
}
BENCHMARK(BM_AssembleStiffness)->Arg(4)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_StressRecovery(benchmark::State& state) {
  const HexMesh mesh = grid(static_cast<int>(state.range(0)));
  const Material mat = soft();
  const NodalField x = sheared(mesh);
  const ElementStress center = center_stresses(mesh, mat, x);
  for (auto _ : state) benchmark::DoNotOptimize(recover_stress_field(mesh, center));
}
BENCHMARK(BM_StressRecovery)->Arg(4)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_RefineCoarsen(benchmark::State& state) {
  HexMesh mesh = grid(4);
  const RefinementTemplate& tmpl = find_template("2x2x2");
  const ElemId e = mesh.live_elements()[21];
  for (auto _ : state) {
    const RefinementRecord rec = refine(mesh, e, tmpl);
    coarsen(mesh, rec);
  }
}
BENCHMARK(BM_RefineCoarsen);

// Constraint-space velocity for m rows against a dense SPD system of size n.
void BM_DelassusVelocity(benchmark::State& state) {
  const int n = 300, m = static_cast<int>(state.range(0));
  std::mt19937 rng(7);
  std::normal_distribution<double> d(0.0, 1.0);
  const MatX r = MatX::NullaryExpr(n, n, [&] { return d(rng); });
  const MatX a = r * r.transpose() + n * MatX::Identity(n, n);
  const Eigen::LDLT<MatX> ldlt(a);
  const VecX b = VecX::NullaryExpr(n, [&] { return d(rng); });
  Eigen::SparseMatrix<double, Eigen::RowMajor> j(m, n);
  for (int i = 0; i < m; ++i) j.insert(i, (7 * i) % n) = 1.0;
  const DelassusSolver solver([&](const VecX& x) { return VecX(ldlt.solve(x)); }, b, j);
  const VecX lambda = VecX::Zero(m), w = VecX::Constant(m, 1.0), g = VecX::Zero(m);
  const std::vector<char> eq(static_cast<std::size_t>(m), 1);
  for (auto _ : state) benchmark::DoNotOptimize(solver.constraint_velocity(lambda, eq, w, g));
}
BENCHMARK(BM_DelassusVelocity)->Arg(3)->Arg(12)->Arg(48);

}  // namespace

BENCHMARK_MAIN();
