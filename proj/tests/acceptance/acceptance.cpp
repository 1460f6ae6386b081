// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "hexadapt/scenarios.hpp"

using namespace hexadapt;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void lshape_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  const LShapeReport r = run_lshape(default_config("lshape"));
  const double secs = seconds_since(t0);
  const int passes = static_cast<int>(r.uniform.size());
  const bool slope_ok = std::abs(r.uniform_slope + 0.21) <= 0.08;
  const bool steeper = r.adaptive_slope < r.uniform_slope;
  report(1, "L-shape convergence", slope_ok && steeper && passes >= 3 && passes <= 4 && secs < 300.0,
         fmt("uniform slope %.3f (target -0.21 +- 0.08), adaptive slope %.3f, %d uniform passes, %.1f s",
             r.uniform_slope, r.adaptive_slope, passes, secs));

  const double ratio = r.adaptive_dofs_at_target / r.uniform_dofs_at_target;
  const double speedup = r.adaptive_seconds_at_target > 0.0 ? r.uniform_seconds_at_target / r.adaptive_seconds_at_target : 0.0;
  report(2, "adaptive economy", r.adaptive_reached_target && ratio <= 1.0 / 3.0,
         fmt("eta <= 8%%: adaptive %.0f DOFs, uniform %.0f DOFs%s, ratio %.3f (<= 0.333); wall-clock speedup %.1fx",
             r.adaptive_dofs_at_target, r.uniform_dofs_at_target,
             r.uniform_target_extrapolated ? " (log-log fit)" : "", ratio, speedup));
}

// ---------------------------------------------------------------------------

Vec6 trilinear_stress(const Vec3& p) {
  Vec6 s;
  for (int k = 0; k < 6; ++k) {
    s[k] = 1.0 + k - 0.7 * p.x() + 0.2 * k * p.y() + 1.3 * p.z() + 0.4 * p.x() * p.y() - 0.3 * k * p.y() * p.z() +
           0.25 * p.z() * p.x() + 0.1 * (k + 1) * p.x() * p.y() * p.z();
  }
  return s;
}

void spr_criterion() {
  const Vec3 lo(-1.0, 0.0, 0.5), ext(2.0, 1.5, 1.0);
  const HexMesh m = build_grid(lo, ext, {4, 3, 3});
  double worst_trilinear = 0.0, worst_constant = 0.0;
  const Vec6 constant = (Vec6() << 2.0, -1.0, 0.5, 0.3, -0.2, 0.1).finished();
  ElementStress tri(m.element_capacity()), con(m.element_capacity(), constant);
  for (ElemId e : m.live_elements()) {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : m.rest_corners(e)) c += p / 8.0;
    tri[e.index()] = trilinear_stress(c);
  }
  for (NodeId n : m.live_nodes()) {
    const Vec3 p = m.rest_position(n);
    const bool interior = ((p - lo).array() > 1e-12).all() && ((lo + ext - p).array() > 1e-12).all();
    if (!interior) continue;
    const Vec6 expect = trilinear_stress(p);
    worst_trilinear = std::max(worst_trilinear, (spr_recover(m, n, tri) - expect).norm() / expect.norm());
    worst_constant = std::max(worst_constant, (spr_recover(m, n, con) - constant).norm() / constant.norm());
  }
  // Constant field from an affine displacement: zero element error.
  const Material mat{1e3, 0.3, 1.0, 0.0, 0.0};
  Mat3 g;
  g << 1e-3, 2e-4, 0.0, 1e-4, -5e-4, 3e-4, 0.0, 2e-4, 8e-4;
  NodalField x = rest_field(m);
  for (NodeId n : m.live_nodes()) x[n.index()] += g * m.rest_position(n);
  const ErrorEstimate est = estimate_error(m, mat, x, false);
  const double eta = *std::max_element(est.errors.begin(), est.errors.end());
  report(3, "SPR exactness", worst_trilinear <= 1e-9 && worst_constant <= 1e-9 && eta <= 1e-12,
         fmt("trilinear rel err %.2e, constant rel err %.2e (<= 1e-9); constant-field max eta_e %.2e (<= 1e-12)",
             worst_trilinear, worst_constant, eta));
}

// ---------------------------------------------------------------------------

void invariance_criterion() {
  const Mat3 q = Eigen::AngleAxisd(1.7, Vec3(0.4, -1.0, 0.6).normalized()).toRotationMatrix();
  const Vec3 d(0.3, -1.2, 0.8);
  std::mt19937 rng(2);
  std::normal_distribution<double> noise(0.0, 0.01);

  HexMesh mesh = build_grid(Vec3::Zero(), Vec3(0.04, 0.02, 0.02), {4, 2, 2});
  const Material soft{1e7, 0.4, 1000.0, 0.0, 0.0};
  NodalField deformed = rest_field(mesh);
  for (NodeId n : mesh.live_nodes()) deformed[n.index()] += 0.02 * Vec3(noise(rng), noise(rng), noise(rng));
  auto tissue_force = [&](const std::function<Vec3(const Vec3&)>& map) {
    TissueBody body(mesh, soft);
    for (NodeId n : mesh.live_nodes()) body.set_position(n, map(deformed[n.index()]));
    body.update_rotations();
    return body.internal_force();
  };
  auto rotate = [&](const VecX& f) {
    VecX out(f.size());
    for (Eigen::Index i = 0; i < f.size(); i += 3) out.segment<3>(i) = q * f.segment<3>(i);
    return out;
  };
  const VecX f0 = tissue_force([](const Vec3& p) { return p; });
  const double tissue_err = (tissue_force([&](const Vec3& p) { return Vec3(q * p + d); }) - rotate(f0)).norm() / f0.norm();
  TissueBody rigid(mesh, soft);
  for (NodeId n : mesh.live_nodes()) rigid.set_position(n, q * mesh.rest_position(n) + d);
  rigid.update_rotations();
  const double tissue_rigid = rigid.internal_force().norm() / f0.norm();

  const Material steel{2e11, 0.3, 7850.0, 0.0, 0.0};
  NeedleModel needle = NeedleModel::straight(Vec3::Zero(), Vec3::UnitX(), 0.04, 8, 5e-4, steel);
  for (std::size_t i = 1; i < needle.num_nodes(); ++i) {
    const double s = needle.rest_position(i).x();
    needle.set_position(i, needle.rest_position(i) + Vec3(2e-4 * s, 0.05 * s * s, -0.02 * s * s));
    needle.set_orientation(i, Eigen::AngleAxisd(4.0 * s, Vec3(0.1, 0.5, 1.0).normalized()).toRotationMatrix());
  }
  const VecX g0 = needle_corotational_force(needle);
  NeedleModel moved = needle;
  moved.apply_rigid_motion(q, d);
  const double needle_err = (needle_corotational_force(moved) - rotate(g0)).norm() / g0.norm();
  NeedleModel straight = NeedleModel::straight(Vec3::Zero(), Vec3::UnitX(), 0.04, 8, 5e-4, steel);
  straight.apply_rigid_motion(q, d);
  const double needle_rigid = needle_corotational_force(straight).norm() / g0.norm();

  const double worst = std::max({tissue_err, tissue_rigid, needle_err, needle_rigid});
  report(4, "corotational invariance", worst <= 1e-8,
         fmt("tissue %.2e / rigid %.2e, needle %.2e / rigid %.2e (relative, <= 1e-8)", tissue_err, tissue_rigid,
             needle_err, needle_rigid));
}

// ---------------------------------------------------------------------------

void patch_criterion() {
  HexMesh mesh = build_grid(Vec3::Zero(), Vec3(3.0, 3.0, 3.0), {3, 3, 3});
  ElemId middle;
  for (ElemId e : mesh.live_elements()) {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : mesh.rest_corners(e)) c += p / 8.0;
    if ((c - Vec3::Constant(1.5)).norm() < 1e-9) middle = e;
  }
  TissueBody body(mesh, Material{1e3, 0.3, 1.0, 0.0, 0.0}, false);
  body.refine(middle, find_template("2x2x2"));
  body.update_rotations();
  const TransformationMatrix& tm = body.reduction();
  Mat3 g;
  g << 1e-3, 2e-4, -1e-4, 3e-4, -2e-3, 5e-4, 1e-4, 0.0, 1.5e-3;
  const Vec3 shift(1e-3, -2e-3, 5e-4);
  auto affine = [&](const Vec3& p) -> Vec3 { return g * p + shift; };

  SteppingSystem sys;
  sys.a = body.stiffness();
  sys.b = VecX::Zero(sys.a.rows());
  sys.reduction = tm.t;
  for (NodeId n : tm.map.nodes) {
    const Eigen::Index r = tm.map.reduced_index[n.index()];
    const Vec3 p = body.mesh().rest_position(n);
    if (r < 0 || !((p.array() < 1e-9).any() || (p.array() > 3.0 - 1e-9).any())) continue;
    for (int k = 0; k < 3; ++k) sys.dirichlet.add(3 * r + k, affine(p)[k]);
  }
  SolverOptions opt;
  opt.tolerance = 1e-14;
  const VecX u = solve_reduced(sys, opt);
  double worst = 0.0, slave_gap = 0.0;
  for (NodeId n : tm.map.nodes) {
    const Vec3 p = body.mesh().rest_position(n);
    worst = std::max(worst, (u.segment<3>(3 * tm.map.full_index[n.index()]) - affine(p)).norm() / affine(p).norm());
  }
  for (const auto& s : tm.slaves) {
    Vec3 interp = Vec3::Zero();
    for (const auto& [n, w] : s.masters) interp += w * u.segment<3>(3 * tm.map.full_index[n.index()]);
    slave_gap = std::max(slave_gap, (u.segment<3>(3 * tm.map.full_index[s.node.index()]) - interp).norm());
  }
  report(5, "hanging-node patch test", worst <= 1e-8 && slave_gap <= 1e-15 && !tm.slaves.empty(),
         fmt("%zu hanging nodes, max nodal rel err %.2e (<= 1e-8), slave-interpolation gap %.1e", tm.slaves.size(),
             worst, slave_gap));
}

// ---------------------------------------------------------------------------

void uzawa_criterion() {
  double worst = 0.0;
  for (unsigned seed = 1; seed <= 10; ++seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int n = 8 + static_cast<int>(seed % 3) * 6, m = 2 + static_cast<int>(seed % 4);
    MatX r = MatX::NullaryExpr(n, n, [&] { return nd(rng); });
    const MatX a = r * r.transpose() + n * MatX::Identity(n, n);
    const VecX b = VecX::NullaryExpr(n, [&] { return nd(rng); });
    const MatX j = MatX::NullaryExpr(m, n, [&] { return nd(rng); });
    const VecX g = VecX::NullaryExpr(m, [&] { return nd(rng); });
    MatX k = MatX::Zero(n + m, n + m);
    k.topLeftCorner(n, n) = a;
    k.topRightCorner(n, m) = -j.transpose();
    k.bottomLeftCorner(m, n) = j;
    VecX rhs(n + m);
    rhs << b, g;
    const VecX x = k.partialPivLu().solve(rhs);
    const UzawaResult u = uzawa_solve_bilateral(a.sparseView(), b, j.sparseView(), VecX::Constant(m, a.diagonal().mean()),
                                                g, 1e-13, 5000);
    worst = std::max({worst, (u.dv - x.head(n)).norm() / std::max(1.0, x.head(n).norm()),
                      (u.lambda - x.tail(m)).norm() / std::max(1.0, x.tail(m).norm())});
  }

  // Friction points: one needle point of unit mass against fixed tissue.
  double cone = 0.0, comp = 0.0;
  for (const Vec3 push : {Vec3(-5.0, 3.0, 0.0), Vec3(-5.0, 6.0, -2.0), Vec3(-2.0, 0.5, 4.0), Vec3(2.0, 1.0, 0.0)}) {
    ConstraintSet set;
    set.points.push_back(ConstraintPoint{});
    set.params.tolerance = 1e-12;
    ConstraintJacobian jac;
    std::vector<Eigen::Triplet<double>> t;
    for (int row = 0; row < 3; ++row) {
      t.emplace_back(row, row, 1.0);
      ConstraintRow cr;
      cr.direction = row;
      cr.weight = 1.0;
      jac.rows.push_back(cr);
    }
    jac.j.resize(3, 3);
    jac.j.setFromTriplets(t.begin(), t.end());
    const VecX b = push;
    const DelassusSolver solver([](const VecX& rhs) { return rhs; }, b, jac.j);
    const VecX dv = solve_contact(solver, jac, set);
    const ConstraintPoint& p = set.points.front();
    const Vec3 u = dv.head<3>();
    const double mu = set.params.mu_surface, ln = p.lambda[0];
    const Eigen::Vector2d lt = p.lambda.tail<2>(), ut = u.tail<2>();
    cone = std::max({cone, lt.norm() - mu * ln, -ln, -u[0]});
    comp = std::max(comp, std::abs(ln * u[0]));
    if (ut.norm() > 1e-8) comp = std::max({comp, std::abs(lt.norm() - mu * ln), std::abs(lt.dot(ut) + lt.norm() * ut.norm())});
  }
  report(6, "Uzawa oracle equivalence", worst <= 1e-6 && cone <= 1e-8 && comp <= 1e-8,
         fmt("KKT mismatch %.2e (<= 1e-6) over 10 instances; friction cone violation %.1e, complementarity %.1e (<= 1e-8)",
             worst, std::max(cone, 0.0), comp));
}

// ---------------------------------------------------------------------------

struct Events {
  std::vector<std::size_t> drops;  // sample index right after each release
};

// An event is a sample whose axial force falls below half of the previous one
// (previous above 1 N).
Events find_events(const std::vector<InsertionSample>& s) {
  Events e;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].retracting) break;
    if (s[i - 1].axial_force > 1.0 && s[i].axial_force < 0.5 * s[i - 1].axial_force) e.drops.push_back(i);
  }
  return e;
}

void phenomenology_criterion(const InsertionReport& r, double puncture) {
  const auto& s = r.samples;
  const Events ev = find_events(s);
  bool ok = ev.drops.size() >= 2;
  double first_peak = 0.0;
  bool first_is_max = false;
  double worst_shaft = 0.0;
  std::size_t shaft_checked = 0;
  if (ok) {
    const std::size_t peak = ev.drops.front() - 1;
    first_peak = s[peak].axial_force;
    first_is_max = true;
    for (std::size_t i = 0; i < peak; ++i) first_is_max = first_is_max && s[i].axial_force <= first_peak;
    ok = first_is_max && first_peak >= puncture && s[peak + 1].axial_force < first_peak;
    double max_force = 0.0;
    for (const auto& x : s) max_force = std::max(max_force, std::abs(x.axial_force));
    for (std::size_t k = 0; k + 1 < ev.drops.size(); ++k) {
      for (std::size_t i = ev.drops[k]; i + 1 < ev.drops[k + 1] - 1; ++i) {
        worst_shaft = std::max(worst_shaft, s[i].shaft_force - s[i + 1].shaft_force);
        ++shaft_checked;
      }
    }
    ok = ok && worst_shaft <= 1e-8 * max_force;
  }
  report(7, "insertion phenomenology", ok,
         fmt("first peak %.2f N (>= %.0f N, first maximum: %s), %zu cut-relaxation events, largest shaft-force "
             "decrease between events %.1e N over %zu samples",
             first_peak, puncture, first_is_max ? "yes" : "no", ev.drops.size(), std::max(worst_shaft, 0.0),
             shaft_checked));
}

void fidelity_criterion(const InsertionReport& coarse, const ScenarioConfig& base) {
  ScenarioConfig adaptive = base;
  adaptive.adaptivity.mode = "adaptive";
  ScenarioConfig fine = base;
  fine.tissue.resolution = {2 * base.tissue.resolution[0], 2 * base.tissue.resolution[1], 2 * base.tissue.resolution[2]};
  const auto t0 = std::chrono::steady_clock::now();
  const InsertionReport a = run_phantom_insertion(adaptive);
  const double ta = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  const InsertionReport f = run_phantom_insertion(fine);
  const double tf = seconds_since(t1);
  const double d_adaptive = curve_distance(a.samples, f.samples);
  const double d_coarse = curve_distance(coarse.samples, f.samples);
  report(8, "adaptive-vs-fine fidelity", d_adaptive < d_coarse && a.peak_dofs < f.peak_dofs,
         fmt("L2 distance to fine: adaptive %.3f N < coarse %.3f N; peak DOFs adaptive %zu < fine %zu (%.0f s vs %.0f s)",
             d_adaptive, d_coarse, a.peak_dofs, f.peak_dofs, ta, tf));
}

void retraction_criterion(const ScenarioConfig& base) {
  ScenarioConfig c = base;
  c.motion.retract = true;
  const InsertionReport r = run_phantom_insertion(c);
  double peak = 0.0;
  for (const auto& s : r.samples) peak = std::max(peak, std::abs(s.axial_force));
  const double final_force = std::abs(r.samples.back().axial_force);
  // Branch separation: retraction force interpolated at the insertion depths.
  std::vector<std::pair<double, double>> in, out;
  for (const auto& s : r.samples) (s.retracting ? out : in).emplace_back(s.depth, s.axial_force);
  std::sort(out.begin(), out.end());
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& [d, f] : in) {
    auto it = std::lower_bound(out.begin(), out.end(), std::make_pair(d, -1e300));
    if (it == out.begin() || it == out.end()) continue;
    const auto lo = *(it - 1), hi = *it;
    const double w = hi.first > lo.first ? (d - lo.first) / (hi.first - lo.first) : 0.0;
    const double g = lo.second + w * (hi.second - lo.second);
    sq += (f - g) * (f - g);
    ++count;
  }
  const double separation = count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
  report(9, "retraction loop", final_force <= 0.01 * peak && separation > 0.01 * peak && !out.empty(),
         fmt("force at full withdrawal %.3g N (<= 1%% of peak %.2f N), branch separation %.2f N", final_force, peak,
             separation));
}

// ---------------------------------------------------------------------------

void determinism_criterion() {
  ScenarioConfig c = default_config("insert");
  c.adaptivity.mode = "adaptive";
  c.motion.insert_depth = 0.004;
  const std::string a = insertion_csv(run_phantom_insertion(c));
  const std::string b = insertion_csv(run_phantom_insertion(c));

  bool restored = true;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    HexMesh m = build_grid(Vec3::Zero(), Vec3(2.0, 1.0, 1.0), {3, 2, 2});
    auto snapshot = [](const HexMesh& mesh) {
      std::vector<double> out;
      for (ElemId e : mesh.live_elements()) {
        out.push_back(e.value);
        for (NodeId n : mesh.element(e).nodes) out.push_back(n.value);
      }
      for (NodeId n : mesh.live_nodes()) {
        out.push_back(n.value);
        for (int k = 0; k < 3; ++k) out.push_back(mesh.rest_position(n)[k]);
      }
      return out;
    };
    const auto before = snapshot(m);
    std::mt19937 rng(seed);
    std::vector<RefinementRecord> done;
    for (int k = 0; k < 15; ++k) {
      std::vector<ElemId> cand;
      for (ElemId e : m.live_elements()) {
        if (m.element(e).level < 2) cand.push_back(e);
      }
      done.push_back(refine(m, cand[rng() % cand.size()], builtin_templates()[rng() % builtin_templates().size()]));
    }
    for (auto it = done.rbegin(); it != done.rend(); ++it) coarsen(m, *it);
    restored = restored && snapshot(m) == before && m.adjacency() == m.rebuild_adjacency();
  }
  report(10, "determinism and reversibility", a == b && restored,
         fmt("repeated adaptive runs %s (%zu bytes); 5 random refine sequences reversed: %s",
             a == b ? "byte-identical" : "DIFFER", a.size(), restored ? "mesh restored" : "MISMATCH"));
}

}  // namespace

int main() {
  lshape_criteria();
  spr_criterion();
  invariance_criterion();
  patch_criterion();
  uzawa_criterion();

  const ScenarioConfig insert = default_config("insert");
  const InsertionReport coarse = run_phantom_insertion(insert);
  phenomenology_criterion(coarse, insert.contact.puncture_strength);
  fidelity_criterion(coarse, insert);
  retraction_criterion(insert);
  determinism_criterion();

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
