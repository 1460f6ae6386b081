#pragma once

// Experiment drivers: the L-shaped static convergence study, needle insertion
// into a phantom block (optionally retracting), the transverse displacement
// probe, and parameter sweeps. Drivers return plain tables; the writers at the
// bottom turn them into CSV and manifest text.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hexadapt/config.hpp"
#include "hexadapt/interaction.hpp"
#include "hexadapt/tissue.hpp"

namespace hexadapt {

// ---------------------------------------------------------------------------
// L-shaped domain

struct PassRecord {
  int pass = 0;
  std::size_t dofs = 0;
  std::size_t elements = 0;
  double eta = 0.0;
  double topology_seconds = 0.0;
  double solve_seconds = 0.0;
};

struct LShapeReport {
  std::vector<PassRecord> uniform;
  std::vector<PassRecord> adaptive;
  double uniform_slope = 0.0;
  double adaptive_slope = 0.0;
  /// DOFs needed to reach the target error. The uniform value is read off
  /// the fitted log-log line when the uniform passes stop short of it.
  double uniform_dofs_at_target = 0.0;
  bool uniform_target_extrapolated = false;
  double adaptive_dofs_at_target = 0.0;
  bool adaptive_reached_target = false;
  /// Extrapolated along with the DOFs when the uniform passes stop short.
  double uniform_seconds_at_target = 0.0;
  double adaptive_seconds_at_target = 0.0;
};

/// L-shaped block: the configured grid with the upper-right quarter of the
/// cross-section removed, `level` uniform halvings of the element size.
HexMesh lshape_mesh(const ScenarioConfig& config, int level);

/// Linear (non-corotated) body with the L-shape supports and traction.
TissueBody lshape_body(const ScenarioConfig& config, HexMesh mesh);

/// Least-squares slope of log(eta) against log(dofs).
double loglog_slope(const std::vector<PassRecord>& passes);

LShapeReport run_lshape(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Needle insertion

struct InsertionSample {
  int step = 0;
  double time = 0.0;
  /// Base travel along the insertion axis.
  double depth = 0.0;
  double tip_displacement = 0.0;
  double axial_force = 0.0;
  double tip_force = 0.0;
  double shaft_force = 0.0;
  double surface_force = 0.0;
  std::size_t dofs = 0;
  std::size_t elements = 0;
  std::size_t surface_points = 0;
  std::size_t tip_points = 0;
  std::size_t shaft_points = 0;
  int uzawa_iterations = 0;
  bool contact_failed = false;
  bool retracting = false;
  /// Global relative error when the step was estimated (adaptive runs).
  std::optional<double> relative_error;
  /// Elements refined and parents restored by the adaptation after the step.
  std::size_t refined = 0;
  std::size_t coarsened = 0;
};

struct InsertionReport {
  std::vector<InsertionSample> samples;
  std::size_t peak_dofs = 0;
  std::size_t min_dofs = 0;
  std::vector<int> contact_failures;
  double topology_seconds = 0.0;
  double solve_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Tissue block for the insertion scenarios in the configured refinement
/// mode (fixed grid, uniform template refinement, or the coarse grid for
/// adaptive runs), clamped on its far face x = max.
TissueBody phantom_tissue(const ScenarioConfig& config);
NeedleState phantom_needle(const ScenarioConfig& config);

using StepObserver = std::function<void(const InsertionSample&, const TissueBody&, const NeedleState&)>;

InsertionReport run_phantom_insertion(const ScenarioConfig& config, const StepObserver& observer = nullptr);

// ---------------------------------------------------------------------------
// Displacement probe

struct ProbeProfile {
  std::string mode;
  std::vector<double> coordinate;    // along the probe line
  std::vector<double> displacement;  // |x - X| at the material point
  std::vector<double> distance;      // from the needle axis
  std::size_t dofs = 0;
  std::size_t elements = 0;
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

/// Refines (per `probe.mode`) the elements crossed by the insertion path,
/// inserts to `motion.insert_depth` and samples the displacement magnitude
/// on the line through the tip orthogonal to the needle.
ProbeProfile run_displacement_probe(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRun {
  std::string label;
  double puncture_strength = 0.0;
  double mu_shaft = 0.0;
  InsertionReport report;
};

/// Puncture strength in {0, 10, 20} at mu = 0.5, then mu in {0.1, 0.3, 0.5}
/// at puncture strength 10.
std::vector<ScenarioConfig> sweep_configs(const ScenarioConfig& base);
std::vector<SweepRun> run_sweep(const ScenarioConfig& base);

// ---------------------------------------------------------------------------
// Curve metrics

/// Root-mean-square difference of two force-displacement curves over the
/// overlapping depth range, with `b` linearly interpolated at the depths of `a`.
/// Only samples of the same branch (inserting or retracting) are compared.
double curve_distance(const std::vector<InsertionSample>& a, const std::vector<InsertionSample>& b);

// ---------------------------------------------------------------------------
// Output

std::string passes_csv(const LShapeReport& report);
std::string insertion_csv(const InsertionReport& report);
std::string probe_csv(const ProbeProfile& profile);
std::string sweep_csv(const std::vector<SweepRun>& runs);

struct Timing {
  std::string phase;
  double seconds = 0.0;
};

/// Run manifest: echoed configuration, library versions, timings and free
/// key/value notes (JSON text).
std::string manifest_json(const ScenarioConfig& config, const std::vector<Timing>& timings,
                          const std::vector<std::pair<std::string, std::string>>& notes = {});

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hexadapt
