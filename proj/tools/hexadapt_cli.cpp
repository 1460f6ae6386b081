// Command line driver: hexadapt {lshape|insert|probe|sweep} [--config f] [--out d]
//                                [--seed n] [--dump-mesh-every k]

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hexadapt/mesh_io.hpp"
#include "hexadapt/scenarios.hpp"

namespace fs = std::filesystem;
using namespace hexadapt;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> dump_every;
};

ScenarioConfig resolve(const Common& c, const std::string& scenario) {
  ScenarioConfig cfg = c.config_path.empty() ? default_config(scenario) : load_config(c.config_path, scenario);
  if (cfg.scenario != scenario && !(scenario == "sweep" && cfg.scenario == "insert")) {
    std::cerr << "note: config declares scenario '" << cfg.scenario << "', running '" << scenario << "'\n";
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.dump_every) cfg.output.dump_mesh_every = *c.dump_every;
  validate(cfg);
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON scenario configuration")->check(CLI::ExistingFile);
  app->add_option("--out", c.out_dir, "output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "recorded in the manifest; the runs are deterministic");
  app->add_option("--dump-mesh-every", c.dump_every, "write a VTK mesh every k steps (0 = never)");
}

StepObserver mesh_dumper(const ScenarioConfig& cfg, const fs::path& dir) {
  const int every = cfg.output.dump_mesh_every;
  if (every <= 0) return nullptr;
  return [=](const InsertionSample& s, const TissueBody& tissue, const NeedleState&) {
    if (s.step % every != 0) return;
    char name[32];
    std::snprintf(name, sizeof(name), "mesh_%05d.vtk", s.step);
    fs::create_directories(dir);
    write_vtk_file((dir / name).string(), tissue.mesh(), &tissue.positions());
  };
}

int run_lshape_cmd(const Common& c) {
  const ScenarioConfig cfg = resolve(c, "lshape");
  const fs::path out = c.out_dir;
  const LShapeReport r = run_lshape(cfg);
  write_text(out / "convergence.csv", passes_csv(r));
  double tc = 0, ms = 0;
  for (const auto* l : {&r.uniform, &r.adaptive}) {
    for (const auto& p : *l) {
      tc += p.topology_seconds;
      ms += p.solve_seconds;
    }
  }
  write_text(out / "manifest.json",
             manifest_json(cfg, {{"topology", tc}, {"solve", ms}, {"uniform_at_target", r.uniform_seconds_at_target},
                                 {"adaptive_at_target", r.adaptive_seconds_at_target}},
                           {{"uniform_slope", std::to_string(r.uniform_slope)},
                            {"adaptive_slope", std::to_string(r.adaptive_slope)},
                            {"uniform_dofs_at_target", std::to_string(r.uniform_dofs_at_target)},
                            {"uniform_target_extrapolated", r.uniform_target_extrapolated ? "true" : "false"},
                            {"adaptive_dofs_at_target", std::to_string(r.adaptive_dofs_at_target)}}));
  std::cout << "uniform slope " << r.uniform_slope << ", adaptive slope " << r.adaptive_slope << "\n"
            << "DOFs at target: uniform " << r.uniform_dofs_at_target
            << (r.uniform_target_extrapolated ? " (extrapolated)" : "") << ", adaptive " << r.adaptive_dofs_at_target
            << "\n";
  return 0;
}

int run_insert_cmd(const Common& c) {
  const ScenarioConfig cfg = resolve(c, "insert");
  const fs::path out = c.out_dir;
  const InsertionReport r = run_phantom_insertion(cfg, mesh_dumper(cfg, out / "meshes"));
  write_text(out / "interaction.csv", insertion_csv(r));
  write_text(out / "manifest.json", manifest_json(cfg, {{"topology", r.topology_seconds},
                                                         {"solve", r.solve_seconds},
                                                         {"total", r.total_seconds}},
                                                  {{"peak_dofs", std::to_string(r.peak_dofs)},
                                                   {"contact_failures", std::to_string(r.contact_failures.size())}}));
  for (int s : r.contact_failures) std::cerr << "contact solver did not converge at step " << s << "\n";
  std::cout << r.samples.size() << " steps, peak DOFs " << r.peak_dofs << "\n";
  return 0;
}

int run_probe_cmd(const Common& c, const std::string& mode) {
  ScenarioConfig cfg = resolve(c, "probe");
  const fs::path out = c.out_dir;
  std::vector<std::string> modes = {"unrefined", "2x3x3", "3x3x3", "full"};
  if (!mode.empty()) modes = {mode};
  std::vector<Timing> timings;
  for (const auto& m : modes) {
    cfg.probe.mode = m;
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const ProbeProfile p = run_displacement_probe(cfg);
    timings.push_back({m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    write_text(out / ("probe_" + m + ".csv"), probe_csv(p));
    std::cout << m << ": " << p.dofs << " DOFs\n";
  }
  write_text(out / "manifest.json", manifest_json(cfg, timings));
  return 0;
}

int run_sweep_cmd(const Common& c) {
  const ScenarioConfig cfg = resolve(c, "insert");
  const fs::path out = c.out_dir;
  const auto runs = run_sweep(cfg);
  std::vector<Timing> timings;
  for (const auto& r : runs) {
    write_text(out / ("interaction_" + r.label + ".csv"), insertion_csv(r.report));
    timings.push_back({r.label, r.report.total_seconds});
  }
  write_text(out / "sweep.csv", sweep_csv(runs));
  write_text(out / "manifest.json", manifest_json(cfg, timings));
  std::cout << runs.size() << " runs\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive hexahedral tissue simulation with needle insertion"};
  app.require_subcommand(1);
  Common common;
  std::string probe_mode;
  auto* lshape = app.add_subcommand("lshape", "static L-shape convergence study");
  auto* insert = app.add_subcommand("insert", "needle insertion into a phantom block");
  auto* probe = app.add_subcommand("probe", "displacement profile through the needle tip");
  auto* sweep = app.add_subcommand("sweep", "puncture strength and friction sweeps");
  for (auto* sub : {lshape, insert, probe, sweep}) add_common(sub, common);
  probe->add_option("--mode", probe_mode, "unrefined, 2x3x3, 3x3x3 or full (default: all)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*lshape) return run_lshape_cmd(common);
    if (*insert) return run_insert_cmd(common);
    if (*probe) return run_probe_cmd(common, probe_mode);
    if (*sweep) return run_sweep_cmd(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
