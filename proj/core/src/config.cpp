#include "hexadapt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hexadapt {

using nlohmann::json;

Material MaterialConfig::to_material() const {
  Material m;
  m.young_modulus = young_modulus;
  m.poisson_ratio = poisson_ratio;
  m.density = density;
  m.rayleigh_alpha = rayleigh_alpha;
  m.rayleigh_beta = rayleigh_beta;
  return m;
}

ContactParameters ContactConfig::to_params() const {
  ContactParameters p;
  p.mu_surface = mu_surface;
  p.mu_shaft = mu_shaft;
  p.puncture_strength = puncture_strength;
  p.cut_strength = cut_strength;
  p.shaft_spacing = shaft_spacing;
  p.shaft_normal_force = shaft_normal_force;
  p.contact_tolerance = contact_tolerance;
  p.penalty_scale = penalty_scale;
  p.tolerance = tolerance;
  p.max_iterations = max_iterations;
  return p;
}

SolverOptions IntegratorConfig::solver_options() const {
  SolverOptions o;
  o.tolerance = solver_tolerance;
  o.max_iterations = max_iterations;
  o.preconditioner = preconditioner == "incomplete_cholesky" ? SolverOptions::Preconditioner::kIncompleteCholesky
                                                             : SolverOptions::Preconditioner::kJacobi;
  return o;
}

ScenarioConfig default_config(const std::string& scenario) {
  ScenarioConfig c;
  c.scenario = scenario;
  if (scenario == "lshape") {
    c.tissue.origin = {0.0, 0.0, 0.0};
    c.tissue.extents = {4.0, 4.0, 2.0};
    c.tissue.resolution = {8, 8, 4};
    c.tissue.material = {1e3, 0.3, 1.0, 0.1, 0.1};
    c.integrator.preconditioner = "incomplete_cholesky";
    c.integrator.solver_tolerance = 1e-10;
    c.adaptivity.mode = "adaptive";
    // The re-entrant edge runs through the thickness; refine in-plane only.
    c.adaptivity.refine_template = "2x2x1";
    c.adaptivity.max_level = 12;
    c.adaptivity.target_relative_error = 0.08;
    return c;
  }
  if (scenario == "insert" || scenario == "probe") {
    c.tissue.origin = {0.0, 0.0, 0.0};
    c.tissue.extents = {0.04, 0.02, 0.02};
    c.tissue.resolution = {9, 4, 4};
    c.tissue.material = {1e7, 0.4, 1000.0, 0.1, 0.001};
    // A 50 MPa needle of this slenderness buckles near 1 N, far below the puncture
    // strength; the default is a steel needle.
    c.needle.material = {2e11, 0.3, 7850.0, 0.1, 0.001};
    c.contact.shaft_normal_force = 0.2;
    if (scenario == "probe") {
      c.tissue.material.young_modulus = 1e3;
      c.needle.material.young_modulus = 1e8;
      c.needle.material.poisson_ratio = 0.4;
      c.contact.mu_shaft = 0.9;
      c.contact.puncture_strength = 1e-3;
      c.contact.shaft_normal_force = 1e-3;
      c.adaptivity.mode = "fixed";
      c.motion.insert_depth = 0.015;
    }
    return c;
  }
  throw ConfigError("scenario", "unknown scenario '" + scenario + "' (expected lshape, insert or probe)");
}

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  ~Reader() = default;

  void finish(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      const json& v = j_.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  template <class T>
  void get_optional(const std::string& key, std::optional<T>& out) const {
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  template <class T, std::size_t N>
  void get_array(const std::string& key, std::array<T, N>& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != N) {
      throw ConfigError(field(key), "expected an array of " + std::to_string(N) + " numbers");
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number() || (std::is_integral_v<T> && !v[i].is_number_integer())) {
        throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      }
      out[i] = v[i].get<T>();
    }
  }

  [[nodiscard]] std::optional<Reader> child(const std::string& key) const {
    if (!j_.contains(key)) return std::nullopt;
    return Reader(j_.at(key), field(key));
  }

  [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
};

void read_material(const Reader& r, MaterialConfig& m) {
  r.get("young_modulus", m.young_modulus);
  r.get("poisson_ratio", m.poisson_ratio);
  r.get("density", m.density);
  r.get("rayleigh_alpha", m.rayleigh_alpha);
  r.get("rayleigh_beta", m.rayleigh_beta);
  r.finish({"young_modulus", "poisson_ratio", "density", "rayleigh_alpha", "rayleigh_beta"});
}

json material_json(const MaterialConfig& m) {
  return {{"young_modulus", m.young_modulus},
          {"poisson_ratio", m.poisson_ratio},
          {"density", m.density},
          {"rayleigh_alpha", m.rayleigh_alpha},
          {"rayleigh_beta", m.rayleigh_beta}};
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

void check(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

void validate_material(const MaterialConfig& m, const std::string& path) {
  check(m.young_modulus > 0.0, path + ".young_modulus", "must be > 0");
  check(m.poisson_ratio >= 0.0 && m.poisson_ratio < 0.5, path + ".poisson_ratio", "must lie in [0, 0.5)");
  check(m.density > 0.0, path + ".density", "must be > 0");
  check(m.rayleigh_alpha >= 0.0, path + ".rayleigh_alpha", "must be >= 0");
  check(m.rayleigh_beta >= 0.0, path + ".rayleigh_beta", "must be >= 0");
}

bool known_template(const std::string& name) {
  try {
    find_template(name);
    return true;
  } catch (const InvalidArgument&) {
    return false;
  }
}

}  // namespace

void validate(const ScenarioConfig& c) {
  check(c.scenario == "lshape" || c.scenario == "insert" || c.scenario == "probe", "scenario",
        "expected lshape, insert or probe");
  for (int k = 0; k < 3; ++k) {
    check(c.tissue.extents[k] > 0.0, "tissue.extents", "must be > 0");
    check(c.tissue.resolution[k] >= 1, "tissue.resolution", "must be >= 1");
  }
  validate_material(c.tissue.material, "tissue.material");
  validate_material(c.needle.material, "needle.material");
  check(c.needle.length > 0.0, "needle.length", "must be > 0");
  check(c.needle.radius > 0.0, "needle.radius", "must be > 0");
  check(c.needle.segments >= 1, "needle.segments", "must be >= 1");
  const auto& d = c.needle.direction;
  check(d[0] * d[0] + d[1] * d[1] + d[2] * d[2] > 0.0, "needle.direction", "must be non-zero");
  check(c.contact.mu_surface >= 0.0, "contact.mu_surface", "must be >= 0");
  check(c.contact.mu_shaft >= 0.0, "contact.mu_shaft", "must be >= 0");
  check(!c.contact.mu_shaft_retract || *c.contact.mu_shaft_retract >= 0.0, "contact.mu_shaft_retract",
        "must be >= 0");
  check(c.contact.puncture_strength >= 0.0, "contact.puncture_strength", "must be >= 0");
  check(!c.contact.cut_strength || *c.contact.cut_strength >= 0.0, "contact.cut_strength", "must be >= 0");
  check(c.contact.shaft_spacing >= 0.0, "contact.shaft_spacing", "must be >= 0");
  check(c.contact.shaft_normal_force >= 0.0, "contact.shaft_normal_force", "must be >= 0");
  check(c.contact.contact_tolerance >= 0.0, "contact.contact_tolerance", "must be >= 0");
  check(c.contact.penalty_scale > 0.0, "contact.penalty_scale", "must be > 0");
  check(c.contact.tolerance > 0.0, "contact.tolerance", "must be > 0");
  check(c.contact.max_iterations >= 1, "contact.max_iterations", "must be >= 1");
  check(c.motion.speed > 0.0, "motion.speed", "must be > 0");
  check(c.motion.insert_depth > 0.0, "motion.insert_depth", "must be > 0");
  const auto& a = c.adaptivity;
  check(a.mode == "fixed" || a.mode == "uniform" || a.mode == "adaptive", "adaptivity.mode",
        "expected fixed, uniform or adaptive");
  check(a.uniform_level >= 0, "adaptivity.uniform_level", "must be >= 0");
  check(known_template(a.refine_template), "adaptivity.template", "unknown template '" + a.refine_template + "'");
  check(a.theta > 0.0 && a.theta < 1.0, "adaptivity.theta", "must lie in (0, 1)");
  check(a.max_level >= 0, "adaptivity.max_level", "must be >= 0");
  check(a.cadence >= 1, "adaptivity.cadence", "must be >= 1");
  check(!a.target_relative_error || *a.target_relative_error > 0.0, "adaptivity.target_relative_error",
        "must be > 0");
  check(c.integrator.tau > 0.0, "integrator.tau", "must be > 0");
  check(c.integrator.solver_tolerance > 0.0, "integrator.solver_tolerance", "must be > 0");
  check(c.integrator.preconditioner == "jacobi" || c.integrator.preconditioner == "incomplete_cholesky",
        "integrator.preconditioner", "expected jacobi or incomplete_cholesky");
  check(c.lshape.traction != 0.0, "lshape.traction", "must be non-zero");
  check(c.lshape.target_error > 0.0, "lshape.target_error", "must be > 0");
  check(c.lshape.uniform_passes >= 1, "lshape.uniform_passes", "must be >= 1");
  check(c.lshape.max_adaptive_passes >= 1, "lshape.max_adaptive_passes", "must be >= 1");
  check(c.probe.mode == "unrefined" || c.probe.mode == "2x3x3" || c.probe.mode == "3x3x3" || c.probe.mode == "full",
        "probe.mode", "expected unrefined, 2x3x3, 3x3x3 or full");
  check(c.probe.samples >= 2, "probe.samples", "must be >= 2");
  check(c.output.dump_mesh_every >= 0, "output.dump_mesh_every", "must be >= 0");
}

ScenarioConfig parse_config(const std::string& text, const std::string& fallback_scenario) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  const Reader r(root, "");
  std::string scenario = fallback_scenario;
  r.get("scenario", scenario);
  ScenarioConfig c = default_config(scenario);
  r.get("seed", c.seed);

  if (auto t = r.child("tissue")) {
    t->get_array("origin", c.tissue.origin);
    t->get_array("extents", c.tissue.extents);
    t->get_array("resolution", c.tissue.resolution);
    if (auto m = t->child("material")) read_material(*m, c.tissue.material);
    t->finish({"origin", "extents", "resolution", "material"});
  }
  if (auto n = r.child("needle")) {
    n->get("length", c.needle.length);
    n->get("radius", c.needle.radius);
    n->get("segments", c.needle.segments);
    n->get_array("tip_start", c.needle.tip_start);
    n->get_array("direction", c.needle.direction);
    if (auto m = n->child("material")) read_material(*m, c.needle.material);
    n->finish({"length", "radius", "segments", "tip_start", "direction", "material"});
  }
  if (auto k = r.child("contact")) {
    k->get("mu_surface", c.contact.mu_surface);
    k->get("mu_shaft", c.contact.mu_shaft);
    k->get_optional("mu_shaft_retract", c.contact.mu_shaft_retract);
    k->get("puncture_strength", c.contact.puncture_strength);
    k->get_optional("cut_strength", c.contact.cut_strength);
    k->get("shaft_spacing", c.contact.shaft_spacing);
    k->get("shaft_normal_force", c.contact.shaft_normal_force);
    k->get("contact_tolerance", c.contact.contact_tolerance);
    k->get("penalty_scale", c.contact.penalty_scale);
    k->get("tolerance", c.contact.tolerance);
    k->get("max_iterations", c.contact.max_iterations);
    k->finish({"mu_surface", "mu_shaft", "mu_shaft_retract", "puncture_strength", "cut_strength", "shaft_spacing",
               "shaft_normal_force", "contact_tolerance", "penalty_scale", "tolerance", "max_iterations"});
  }
  if (auto m = r.child("motion")) {
    m->get("speed", c.motion.speed);
    m->get("insert_depth", c.motion.insert_depth);
    m->get("retract", c.motion.retract);
    m->finish({"speed", "insert_depth", "retract"});
  }
  if (auto a = r.child("adaptivity")) {
    a->get("mode", c.adaptivity.mode);
    a->get("uniform_level", c.adaptivity.uniform_level);
    a->get("template", c.adaptivity.refine_template);
    a->get("theta", c.adaptivity.theta);
    a->get("max_level", c.adaptivity.max_level);
    a->get("cadence", c.adaptivity.cadence);
    a->get_optional("target_relative_error", c.adaptivity.target_relative_error);
    a->finish({"mode", "uniform_level", "template", "theta", "max_level", "cadence", "target_relative_error"});
  }
  if (auto i = r.child("integrator")) {
    i->get("tau", c.integrator.tau);
    i->get("solver_tolerance", c.integrator.solver_tolerance);
    i->get("max_iterations", c.integrator.max_iterations);
    i->get("preconditioner", c.integrator.preconditioner);
    i->finish({"tau", "solver_tolerance", "max_iterations", "preconditioner"});
  }
  if (auto l = r.child("lshape")) {
    l->get("traction", c.lshape.traction);
    l->get("target_error", c.lshape.target_error);
    l->get("uniform_passes", c.lshape.uniform_passes);
    l->get("max_adaptive_passes", c.lshape.max_adaptive_passes);
    l->finish({"traction", "target_error", "uniform_passes", "max_adaptive_passes"});
  }
  if (auto p = r.child("probe")) {
    p->get("mode", c.probe.mode);
    p->get("samples", c.probe.samples);
    p->finish({"mode", "samples"});
  }
  if (auto o = r.child("output")) {
    o->get("dump_mesh_every", c.output.dump_mesh_every);
    o->finish({"dump_mesh_every"});
  }
  r.finish({"scenario", "seed", "tissue", "needle", "contact", "motion", "adaptivity", "integrator", "lshape",
            "probe", "output"});
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path, const std::string& fallback_scenario) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fallback_scenario);
}

std::string echo_config(const ScenarioConfig& c) {
  json j;
  j["scenario"] = c.scenario;
  j["seed"] = c.seed;
  j["tissue"] = {{"origin", c.tissue.origin},
                 {"extents", c.tissue.extents},
                 {"resolution", c.tissue.resolution},
                 {"material", material_json(c.tissue.material)}};
  j["needle"] = {{"length", c.needle.length},
                 {"radius", c.needle.radius},
                 {"segments", c.needle.segments},
                 {"tip_start", c.needle.tip_start},
                 {"direction", c.needle.direction},
                 {"material", material_json(c.needle.material)}};
  j["contact"] = {{"mu_surface", c.contact.mu_surface},
                  {"mu_shaft", c.contact.mu_shaft},
                  {"mu_shaft_retract", optional_json(c.contact.mu_shaft_retract)},
                  {"puncture_strength", c.contact.puncture_strength},
                  {"cut_strength", optional_json(c.contact.cut_strength)},
                  {"shaft_spacing", c.contact.shaft_spacing},
                  {"shaft_normal_force", c.contact.shaft_normal_force},
                  {"contact_tolerance", c.contact.contact_tolerance},
                  {"penalty_scale", c.contact.penalty_scale},
                  {"tolerance", c.contact.tolerance},
                  {"max_iterations", c.contact.max_iterations}};
  j["motion"] = {{"speed", c.motion.speed}, {"insert_depth", c.motion.insert_depth}, {"retract", c.motion.retract}};
  j["adaptivity"] = {{"mode", c.adaptivity.mode},
                     {"uniform_level", c.adaptivity.uniform_level},
                     {"template", c.adaptivity.refine_template},
                     {"theta", c.adaptivity.theta},
                     {"max_level", c.adaptivity.max_level},
                     {"cadence", c.adaptivity.cadence},
                     {"target_relative_error", optional_json(c.adaptivity.target_relative_error)}};
  j["integrator"] = {{"tau", c.integrator.tau},
                     {"solver_tolerance", c.integrator.solver_tolerance},
                     {"max_iterations", c.integrator.max_iterations},
                     {"preconditioner", c.integrator.preconditioner}};
  j["lshape"] = {{"traction", c.lshape.traction},
                 {"target_error", c.lshape.target_error},
                 {"uniform_passes", c.lshape.uniform_passes},
                 {"max_adaptive_passes", c.lshape.max_adaptive_passes}};
  j["probe"] = {{"mode", c.probe.mode}, {"samples", c.probe.samples}};
  j["output"] = {{"dump_mesh_every", c.output.dump_mesh_every}};
  return j.dump(2);
}

}  // namespace hexadapt
