#pragma once

// Scenario configuration: JSON text with per-scenario defaults. Unknown keys
// and out-of-range values raise ConfigError naming the offending field path
// (for example "tissue.material.poisson_ratio").

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hexadapt/corotational.hpp"
#include "hexadapt/interaction.hpp"
#include "hexadapt/integrator.hpp"
#include "hexadapt/tissue.hpp"

namespace hexadapt {

struct MaterialConfig {
  double young_modulus = 1.0;
  double poisson_ratio = 0.3;
  double density = 1000.0;
  double rayleigh_alpha = 0.1;
  double rayleigh_beta = 0.1;

  [[nodiscard]] Material to_material() const;
  bool operator==(const MaterialConfig&) const = default;
};

struct TissueConfig {
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::array<double, 3> extents{1.0, 1.0, 1.0};
  std::array<int, 3> resolution{1, 1, 1};
  MaterialConfig material;
  bool operator==(const TissueConfig&) const = default;
};

struct NeedleConfig {
  double length = 0.032;
  double radius = 0.001;
  int segments = 16;
  std::array<double, 3> tip_start{-0.001, 0.01, 0.01};
  std::array<double, 3> direction{1.0, 0.0, 0.0};
  MaterialConfig material;
  bool operator==(const NeedleConfig&) const = default;
};

struct ContactConfig {
  double mu_surface = 0.8;
  double mu_shaft = 0.5;
  /// Shaft friction while retracting; defaults to mu_shaft.
  std::optional<double> mu_shaft_retract;
  double puncture_strength = 10.0;
  std::optional<double> cut_strength;
  double shaft_spacing = 0.0;
  double shaft_normal_force = 0.0;
  double contact_tolerance = 1e-6;
  double penalty_scale = 1.0;
  double tolerance = 1e-6;
  int max_iterations = 200;

  [[nodiscard]] ContactParameters to_params() const;
  bool operator==(const ContactConfig&) const = default;
};

struct MotionConfig {
  double speed = 0.004;
  double insert_depth = 0.02;
  bool retract = false;
  bool operator==(const MotionConfig&) const = default;
};

struct AdaptivityConfig {
  /// "fixed", "uniform" or "adaptive".
  std::string mode = "fixed";
  int uniform_level = 1;
  std::string refine_template = "2x2x2";
  double theta = 0.3;
  int max_level = 1;
  /// Estimate and adapt every k-th step.
  int cadence = 1;
  std::optional<double> target_relative_error;
  bool operator==(const AdaptivityConfig&) const = default;
};

struct IntegratorConfig {
  double tau = 0.01;
  double solver_tolerance = 1e-8;
  int max_iterations = 0;
  /// "jacobi" or "incomplete_cholesky".
  std::string preconditioner = "jacobi";

  [[nodiscard]] SolverOptions solver_options() const;
  bool operator==(const IntegratorConfig&) const = default;
};

struct LShapeConfig {
  double traction = 1.0;
  double target_error = 0.08;
  int uniform_passes = 3;
  int max_adaptive_passes = 20;
  bool operator==(const LShapeConfig&) const = default;
};

struct ProbeConfig {
  /// "unrefined", "2x3x3", "3x3x3" or "full".
  std::string mode = "unrefined";
  int samples = 41;
  bool operator==(const ProbeConfig&) const = default;
};

struct OutputConfig {
  int dump_mesh_every = 0;
  bool operator==(const OutputConfig&) const = default;
};

struct ScenarioConfig {
  /// "lshape", "insert" or "probe".
  std::string scenario = "insert";
  std::uint64_t seed = 0;
  TissueConfig tissue;
  NeedleConfig needle;
  ContactConfig contact;
  MotionConfig motion;
  AdaptivityConfig adaptivity;
  IntegratorConfig integrator;
  LShapeConfig lshape;
  ProbeConfig probe;
  OutputConfig output;
  bool operator==(const ScenarioConfig&) const = default;
};

/// Documented defaults of a scenario ("lshape", "insert", "probe").
ScenarioConfig default_config(const std::string& scenario);

/// Parses JSON text over the defaults of its "scenario" entry (or of
/// `fallback_scenario` when absent) and validates the result.
ScenarioConfig parse_config(const std::string& text, const std::string& fallback_scenario = "insert");
ScenarioConfig load_config(const std::filesystem::path& path, const std::string& fallback_scenario = "insert");

/// Throws ConfigError naming the first invalid field.
void validate(const ScenarioConfig& config);

/// Complete configuration as JSON text; parse_config(echo_config(c)) == c.
std::string echo_config(const ScenarioConfig& config);

}  // namespace hexadapt
