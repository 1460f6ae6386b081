#include "hexadapt/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Core>

#include "json.hpp"

#ifndef HEXADAPT_VERSION
#define HEXADAPT_VERSION "unknown"
#endif

namespace hexadapt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vec3 to_vec(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::array<int, 3> scaled(const std::array<int, 3>& r, int level) {
  const int f = 1 << level;
  return {r[0] * f, r[1] * f, r[2] * f};
}

PointPredicate on_plane(int axis, double value, double tol) {
  return [=](const Vec3& p) { return std::abs(p[axis] - value) <= tol; };
}

}  // namespace

// ---------------------------------------------------------------------------
// L-shape

HexMesh lshape_mesh(const ScenarioConfig& config, int level) {
  const Vec3 o = to_vec(config.tissue.origin);
  const Vec3 ext = to_vec(config.tissue.extents);
  HexMesh mesh = build_grid(o, ext, scaled(config.tissue.resolution, level));
  const double eps = 1e-9 * ext.maxCoeff();
  const Vec3 mid = o + 0.5 * ext;
  carve(mesh, [=](const Vec3& p) { return p.x() < mid.x() - eps || p.y() < mid.y() - eps; });
  return mesh;
}

TissueBody lshape_body(const ScenarioConfig& config, HexMesh mesh) {
  const Vec3 o = to_vec(config.tissue.origin);
  const Vec3 ext = to_vec(config.tissue.extents);
  const double tol = 1e-9 * ext.maxCoeff();
  TissueBody body(std::move(mesh), config.tissue.material.to_material(), false);
  body.add_support({on_plane(0, o.x() + ext.x(), tol), {true, true, true}});
  body.add_support({on_plane(1, o.y() + ext.y(), tol), {false, true, false}});
  body.add_traction({on_plane(0, o.x(), tol), Vec3(-config.lshape.traction, 0.0, 0.0)});
  return body;
}

double loglog_slope(const std::vector<PassRecord>& passes) {
  if (passes.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(passes.size());
  for (const auto& p : passes) {
    const double x = std::log(static_cast<double>(p.dofs));
    const double y = std::log(p.eta);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

LShapeReport run_lshape(const ScenarioConfig& config) {
  validate(config);
  const SolverOptions solver = config.integrator.solver_options();
  const double target = config.lshape.target_error;
  LShapeReport report;

  for (int level = 0; level < config.lshape.uniform_passes; ++level) {
    const auto t0 = Clock::now();
    TissueBody body = lshape_body(config, lshape_mesh(config, level));
    PassRecord rec;
    rec.pass = level;
    rec.topology_seconds = seconds_since(t0);
    const auto t1 = Clock::now();
    try {
      body.solve_static(solver);
    } catch (const SolverFailure& e) {
      throw SolverFailure("lshape uniform pass " + std::to_string(level) + ": " + e.what(), e.residual(),
                          e.iterations());
    }
    rec.solve_seconds = seconds_since(t1);
    const ErrorEstimate est = body.estimate();
    rec.eta = est.relative_error.value_or(0.0);
    rec.dofs = static_cast<std::size_t>(body.num_reduced_dofs());
    rec.elements = body.mesh().num_live_elements();
    report.uniform.push_back(rec);
  }
  report.uniform_slope = loglog_slope(report.uniform);

  const auto hit = std::find_if(report.uniform.begin(), report.uniform.end(),
                                [&](const PassRecord& p) { return p.eta <= target; });
  if (hit != report.uniform.end()) {
    report.uniform_dofs_at_target = static_cast<double>(hit->dofs);
    report.uniform_seconds_at_target = hit->topology_seconds + hit->solve_seconds;
  } else if (report.uniform.size() >= 2 && report.uniform_slope < 0.0) {
    // log eta = log eta_last + slope (log dofs - log dofs_last)
    const auto& last = report.uniform.back();
    report.uniform_dofs_at_target =
        static_cast<double>(last.dofs) * std::exp(std::log(target / last.eta) / report.uniform_slope);
    report.uniform_target_extrapolated = true;
    // Wall clock follows the power law through the last two passes.
    const auto& prev = report.uniform[report.uniform.size() - 2];
    const double t_last = last.topology_seconds + last.solve_seconds;
    const double t_prev = prev.topology_seconds + prev.solve_seconds;
    if (t_last > 0.0 && t_prev > 0.0 && last.dofs > prev.dofs) {
      const double p = std::log(t_last / t_prev) / std::log(static_cast<double>(last.dofs) / prev.dofs);
      report.uniform_seconds_at_target = t_last * std::pow(report.uniform_dofs_at_target / last.dofs, p);
    }
  }

  TissueBody body = lshape_body(config, lshape_mesh(config, 0));
  AdaptOptions opts;
  opts.theta = config.adaptivity.theta;
  opts.refine_template = config.adaptivity.refine_template;
  opts.max_level = config.adaptivity.max_level;
  opts.from_rest = true;
  double elapsed = 0.0;
  double pending_topology = 0.0;
  for (int pass = 0; pass < config.lshape.max_adaptive_passes; ++pass) {
    PassRecord rec;
    rec.pass = pass;
    rec.topology_seconds = pending_topology;
    const auto t1 = Clock::now();
    try {
      body.solve_static(solver);
    } catch (const SolverFailure& e) {
      throw SolverFailure("lshape adaptive pass " + std::to_string(pass) + ": " + e.what(), e.residual(),
                          e.iterations());
    }
    rec.solve_seconds = seconds_since(t1);
    elapsed += rec.topology_seconds + rec.solve_seconds;
    const ErrorEstimate est = body.estimate();
    rec.eta = est.relative_error.value_or(0.0);
    rec.dofs = static_cast<std::size_t>(body.num_reduced_dofs());
    rec.elements = body.mesh().num_live_elements();
    report.adaptive.push_back(rec);
    if (rec.eta <= target) {
      report.adaptive_reached_target = true;
      report.adaptive_dofs_at_target = static_cast<double>(rec.dofs);
      report.adaptive_seconds_at_target = elapsed;
      break;
    }
    const auto t2 = Clock::now();
    const AdaptReport ar = body.adapt(opts);
    pending_topology = seconds_since(t2);
    if (ar.refined == 0) break;
  }
  report.adaptive_slope = loglog_slope(report.adaptive);
  return report;
}

// ---------------------------------------------------------------------------
// Insertion

TissueBody phantom_tissue(const ScenarioConfig& config) {
  const Vec3 o = to_vec(config.tissue.origin);
  const Vec3 ext = to_vec(config.tissue.extents);
  TissueBody body(build_grid(o, ext, config.tissue.resolution), config.tissue.material.to_material(), true);
  body.add_support({on_plane(0, o.x() + ext.x(), 1e-9 * ext.maxCoeff()), {true, true, true}});
  if (config.adaptivity.mode == "uniform") {
    const RefinementTemplate& tmpl = find_template(config.adaptivity.refine_template);
    for (int level = 0; level < config.adaptivity.uniform_level; ++level) {
      for (ElemId e : body.mesh().live_elements()) body.refine(e, tmpl);
    }
    body.snap_slaves();
  }
  return body;
}

NeedleState phantom_needle(const ScenarioConfig& config) {
  const Vec3 dir = to_vec(config.needle.direction).normalized();
  const Vec3 tip = to_vec(config.needle.tip_start);
  const Vec3 base = tip - config.needle.length * dir;
  return NeedleState(NeedleModel::straight(base, dir, config.needle.length, config.needle.segments,
                                           config.needle.radius, config.needle.material.to_material()));
}

namespace {

InsertionReport run_insertion(const ScenarioConfig& config, TissueBody& tissue, NeedleState& needle,
                              const StepObserver& observer) {
  const auto t_start = Clock::now();
  InsertionReport report;
  ConstraintSet set;
  set.params = config.contact.to_params();
  set.params.validate();

  const double tau = config.integrator.tau;
  const double speed = config.motion.speed;
  const Vec3 dir = to_vec(config.needle.direction).normalized();
  const Vec3 base0 = needle.model.base();
  const Vec3 tip0 = needle.model.tip();
  const int n_insert = std::max(1, static_cast<int>(std::lround(config.motion.insert_depth / (speed * tau))));
  const int n_total = config.motion.retract ? 2 * n_insert : n_insert;
  const bool adaptive = config.adaptivity.mode == "adaptive";

  AdaptOptions opts;
  opts.theta = config.adaptivity.theta;
  opts.refine_template = config.adaptivity.refine_template;
  opts.max_level = config.adaptivity.max_level;
  opts.target_relative_error = config.adaptivity.target_relative_error;
  const auto blocked = [&](ElemId parent) { return anchors_block_coarsening(tissue.mesh(), set, parent); };

  report.min_dofs = static_cast<std::size_t>(tissue.num_reduced_dofs());
  report.peak_dofs = report.min_dofs;
  for (int s = 0; s < n_total; ++s) {
    const bool retracting = s >= n_insert;
    if (retracting && config.contact.mu_shaft_retract) set.params.mu_shaft = *config.contact.mu_shaft_retract;
    Vec6 base_velocity = Vec6::Zero();
    base_velocity.head<3>() = (retracting ? -speed : speed) * dir;

    const CoupledStepReport cr = coupled_step(tissue, needle, set, tau, base_velocity);
    report.solve_seconds += cr.solve_seconds;

    std::optional<double> eta;
    std::size_t refined = 0, coarsened = 0;
    if (adaptive && (s + 1) % config.adaptivity.cadence == 0) {
      const auto t0 = Clock::now();
      const AdaptReport ar = tissue.adapt(opts, blocked);
      if (ar.relative_error_defined) eta = ar.relative_error;
      refined = ar.refined;
      coarsened = ar.coarsened;
      reanchor_after_refinement(tissue, set);
      report.topology_seconds += seconds_since(t0);
    }

    InsertionSample smp;
    smp.step = s + 1;
    smp.time = (s + 1) * tau;
    smp.depth = (needle.model.base() - base0).dot(dir);
    smp.tip_displacement = (needle.model.tip() - tip0).dot(dir);
    smp.axial_force = cr.axial_force;
    smp.refined = refined;
    smp.coarsened = coarsened;
    smp.tip_force = cr.tip_force;
    smp.shaft_force = cr.shaft_force;
    smp.surface_force = cr.surface_force;
    smp.dofs = static_cast<std::size_t>(tissue.num_reduced_dofs());
    smp.elements = tissue.mesh().num_live_elements();
    smp.surface_points = cr.surface_points;
    smp.tip_points = cr.tip_points;
    smp.shaft_points = cr.shaft_points;
    smp.uzawa_iterations = cr.uzawa_iterations;
    smp.contact_failed = cr.contact_failed;
    smp.retracting = retracting;
    smp.relative_error = eta;
    if (cr.contact_failed) report.contact_failures.push_back(smp.step);
    report.peak_dofs = std::max(report.peak_dofs, smp.dofs);
    report.min_dofs = std::min(report.min_dofs, smp.dofs);
    report.samples.push_back(smp);
    if (observer) observer(smp, tissue, needle);
  }
  report.total_seconds = seconds_since(t_start);
  return report;
}

bool segment_hits_box(const Vec3& a, const Vec3& b, const Vec3& lo, const Vec3& hi) {
  double t0 = 0.0, t1 = 1.0;
  const Vec3 d = b - a;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-300) {
      if (a[k] < lo[k] || a[k] > hi[k]) return false;
      continue;
    }
    double ta = (lo[k] - a[k]) / d[k], tb = (hi[k] - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

InsertionReport run_phantom_insertion(const ScenarioConfig& config, const StepObserver& observer) {
  validate(config);
  TissueBody tissue = phantom_tissue(config);
  NeedleState needle = phantom_needle(config);
  return run_insertion(config, tissue, needle, observer);
}

// ---------------------------------------------------------------------------
// Probe

ProbeProfile run_displacement_probe(const ScenarioConfig& config) {
  validate(config);
  ScenarioConfig cfg = config;
  cfg.adaptivity.mode = "fixed";
  cfg.motion.retract = false;
  TissueBody tissue = phantom_tissue(cfg);
  NeedleState needle = phantom_needle(cfg);

  const Vec3 dir = to_vec(cfg.needle.direction).normalized();
  const Vec3 tip0 = to_vec(cfg.needle.tip_start);
  const std::string& mode = cfg.probe.mode;
  if (mode == "full") {
    const RefinementTemplate& tmpl = find_template("3x3x3");
    for (ElemId e : tissue.mesh().live_elements()) tissue.refine(e, tmpl);
  } else if (mode != "unrefined") {
    const RefinementTemplate& tmpl = find_template(mode);
    const Vec3 end = tip0 + (cfg.motion.insert_depth + cfg.needle.radius) * dir;
    const Vec3 pad = Vec3::Constant(cfg.needle.radius);
    for (ElemId e : tissue.mesh().live_elements()) {
      const auto c = tissue.mesh().rest_corners(e);
      Vec3 lo = c[0], hi = c[0];
      for (const auto& p : c) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
      if (segment_hits_box(tip0, end, lo - pad, hi + pad)) tissue.refine(e, tmpl);
    }
  }
  tissue.snap_slaves();
  run_insertion(cfg, tissue, needle, nullptr);

  ProbeProfile prof;
  prof.mode = mode;
  prof.dofs = static_cast<std::size_t>(tissue.num_reduced_dofs());
  prof.elements = tissue.mesh().num_live_elements();
  int axis = 2;
  if (std::abs(dir.z()) > 0.9) axis = 1;
  prof.direction = Vec3::Unit(axis);
  const double along = (needle.model.tip() - tip0).dot(dir);
  prof.origin = tip0 + along * dir;

  const Vec3 o = to_vec(cfg.tissue.origin);
  const Vec3 ext = to_vec(cfg.tissue.extents);
  const NodalField rest = rest_field(tissue.mesh());
  const double lo = o[axis], hi = o[axis] + ext[axis];
  const double shrink = 1e-9 * ext[axis];
  const int n = cfg.probe.samples;
  for (int i = 0; i < n; ++i) {
    const double t = std::clamp(lo + (hi - lo) * i / (n - 1), lo + shrink, hi - shrink);
    Vec3 p = prof.origin;
    p[axis] = t;
    const auto loc = locate_point(tissue.mesh(), rest, p, 1e-6);
    if (!loc) continue;
    const Vec3 u = tissue.point_position(loc->element, loc->coord) - p;
    prof.coordinate.push_back(t);
    prof.displacement.push_back(u.norm());
    prof.distance.push_back(std::abs(t - prof.origin[axis]));
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<ScenarioConfig> sweep_configs(const ScenarioConfig& base) {
  std::vector<ScenarioConfig> out;
  auto add = [&](double lambda0, double mu) {
    for (const auto& c : out) {
      if (c.contact.puncture_strength == lambda0 && c.contact.mu_shaft == mu) return;
    }
    ScenarioConfig c = base;
    c.contact.puncture_strength = lambda0;
    c.contact.cut_strength.reset();
    c.contact.mu_shaft = mu;
    out.push_back(c);
  };
  for (double l : {0.0, 10.0, 20.0}) add(l, 0.5);
  for (double m : {0.1, 0.3, 0.5}) add(10.0, m);
  return out;
}

std::vector<SweepRun> run_sweep(const ScenarioConfig& base) {
  std::vector<SweepRun> runs;
  for (const auto& c : sweep_configs(base)) {
    SweepRun r;
    r.puncture_strength = c.contact.puncture_strength;
    r.mu_shaft = c.contact.mu_shaft;
    r.label = "lambda0_" + num(r.puncture_strength) + "_mu_" + num(r.mu_shaft);
    r.report = run_phantom_insertion(c);
    runs.push_back(std::move(r));
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Curves

double curve_distance(const std::vector<InsertionSample>& a, const std::vector<InsertionSample>& b) {
  double sum = 0.0;
  std::size_t count = 0;
  for (bool branch : {false, true}) {
    std::vector<std::pair<double, double>> ref;
    for (const auto& s : b) {
      if (s.retracting == branch) ref.emplace_back(s.depth, s.axial_force);
    }
    if (ref.size() < 2) continue;
    std::sort(ref.begin(), ref.end());
    for (const auto& s : a) {
      if (s.retracting != branch) continue;
      if (s.depth < ref.front().first || s.depth > ref.back().first) continue;
      auto it = std::lower_bound(ref.begin(), ref.end(), std::make_pair(s.depth, -1e300));
      double f;
      if (it == ref.begin()) {
        f = it->second;
      } else {
        const auto& p = *(it - 1);
        const auto& q = it == ref.end() ? *(it - 1) : *it;
        const double w = q.first > p.first ? (s.depth - p.first) / (q.first - p.first) : 0.0;
        f = p.second + w * (q.second - p.second);
      }
      sum += (s.axial_force - f) * (s.axial_force - f);
      ++count;
    }
  }
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

// ---------------------------------------------------------------------------
// Output

std::string passes_csv(const LShapeReport& report) {
  std::ostringstream os;
  os << "kind,pass,dofs,elements,eta\n";
  for (const auto* list : {&report.uniform, &report.adaptive}) {
    const char* kind = list == &report.uniform ? "uniform" : "adaptive";
    for (const auto& p : *list) {
      os << kind << ',' << p.pass << ',' << p.dofs << ',' << p.elements << ',' << num(p.eta) << '\n';
    }
  }
  return os.str();
}

std::string insertion_csv(const InsertionReport& report) {
  std::ostringstream os;
  os << "step,time,depth,tip_displacement,axial_force,tip_force,shaft_force,surface_force,dofs,elements,"
        "surface_points,tip_points,shaft_points,uzawa_iterations,contact_failed,retracting,relative_error,"
        "refined,coarsened\n";
  for (const auto& s : report.samples) {
    os << s.step << ',' << num(s.time) << ',' << num(s.depth) << ',' << num(s.tip_displacement) << ','
       << num(s.axial_force) << ',' << num(s.tip_force) << ',' << num(s.shaft_force) << ','
       << num(s.surface_force) << ',' << s.dofs << ',' << s.elements << ',' << s.surface_points << ','
       << s.tip_points << ',' << s.shaft_points << ',' << s.uzawa_iterations << ',' << int(s.contact_failed)
       << ',' << int(s.retracting) << ',' << (s.relative_error ? num(*s.relative_error) : "") << ',' << s.refined << ','
       << s.coarsened << '\n';
  }
  return os.str();
}

std::string probe_csv(const ProbeProfile& profile) {
  std::ostringstream os;
  os << "mode,coordinate,distance,displacement,dofs\n";
  for (std::size_t i = 0; i < profile.coordinate.size(); ++i) {
    os << profile.mode << ',' << num(profile.coordinate[i]) << ',' << num(profile.distance[i]) << ','
       << num(profile.displacement[i]) << ',' << profile.dofs << '\n';
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SweepRun>& runs) {
  std::ostringstream os;
  os << "label,puncture_strength,mu_shaft,peak_force,final_force,peak_dofs,contact_failures\n";
  for (const auto& r : runs) {
    double peak = 0.0, last = 0.0;
    for (const auto& s : r.report.samples) peak = std::max(peak, s.axial_force);
    if (!r.report.samples.empty()) last = r.report.samples.back().axial_force;
    os << r.label << ',' << num(r.puncture_strength) << ',' << num(r.mu_shaft) << ',' << num(peak) << ','
       << num(last) << ',' << r.report.peak_dofs << ',' << r.report.contact_failures.size() << '\n';
  }
  return os.str();
}

std::string manifest_json(const ScenarioConfig& config, const std::vector<Timing>& timings,
                          const std::vector<std::pair<std::string, std::string>>& notes) {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::json::parse(echo_config(config));
  j["versions"] = {{"hexadapt", HEXADAPT_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (const auto& tm : timings) t[tm.phase] = tm.seconds;
  j["timings_seconds"] = t;
  nlohmann::ordered_json n = nlohmann::ordered_json::object();
  for (const auto& [k, v] : notes) n[k] = v;
  j["notes"] = n;
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace hexadapt
