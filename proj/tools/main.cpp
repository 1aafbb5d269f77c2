// Command-line front end: validate | run | rci | region.
//
// Exit codes: 0 ok, 1 validation failure, 2 runtime invariant violation,
// 3 solver failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cctmpc/error.hpp"
#include "cctmpc/scenario.hpp"
#include "cctmpc/simulator.hpp"

using namespace cctmpc;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kInvariant = 2, kSolver = 3 };

struct Options {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string output = "out";
  std::optional<double> resolution;
  std::string tolerance_overrides;
  std::string export_template;
  std::vector<double> reference;
  int threads = 0;
};

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kSolverFailure:
    case ErrorCode::kNotConverged:
      return kSolver;
    case ErrorCode::kMidRunInfeasible:
      return kInvariant;
    default:
      return kValidation;
  }
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::filesystem::path output_dir(const Options& o) {
  std::filesystem::create_directories(o.output);
  return o.output;
}

Scenario load(const Options& o) {
  Scenario s = read_scenario(o.scenario);
  if (!o.tolerance_overrides.empty()) s.tolerances.apply_overrides(o.tolerance_overrides);
  if (o.seed) s.simulation.seed = *o.seed;
  if (o.resolution) s.simulation.region_resolution = *o.resolution;
  return s;
}

Vector reference_for(const Options& o, const Scenario& s) {
  if (!o.reference.empty()) return Eigen::Map<const Vector>(o.reference.data(), o.reference.size());
  if (s.simulation.region_reference.size() > 0) return s.simulation.region_reference;
  return Vector::Zero(s.model.output_dim());
}

int print_validation(const ValidationReport& rep) {
  for (const auto& c : rep.checks) std::cout << (c.ok ? "[ok]   " : "[FAIL] ") << c.name << ": " << c.message << "\n";
  if (const ValidationCheck* f = rep.first_failure()) {
    std::cerr << "validation failed at '" << f->name << "'\n";
    return f->message.find("SolverFailure") != std::string::npos ? kSolver : kValidation;
  }
  return kOk;
}

int cmd_validate(const Options& o) {
  const Scenario s = load(o);
  std::cout << "[ok]   schema: " << o.scenario << "\n";
  const int rc = print_validation(validate_scenario(s));
  if (rc == kOk && !o.export_template.empty()) {
    std::ofstream out(o.export_template);
    out << dump_template(build_template(s.tmpl));
    std::cout << "template written to " << o.export_template << "\n";
  }
  return rc;
}

int cmd_run(const Options& o) {
  const Scenario s = load(o);
  const ValidationReport rep = validate_scenario(s);
  if (!rep.ok()) return print_validation(rep);

  const RunResult run = run_closed_loop(s);
  const RunSummary sum = summarize(run, s.tolerances);
  const auto dir = output_dir(o);
  {
    std::ofstream csv(dir / "trace.csv");
    write_trace_csv(csv, run);
    std::ofstream js(dir / "summary.json");
    write_summary_json(js, s, run, sum);
  }
  write_scenario((dir / "scenario.scn").string(), s);

  std::cout << "steps " << sum.steps << ", final L " << sum.final_lyapunov << ", settle time " << sum.settle_time
            << ", solve time " << sum.total_solve_seconds << " s\n";
  std::cout << "trace: " << (dir / "trace.csv").string() << "\n";
  if (run.mid_run_infeasible) {
    std::cerr << "infeasible at step " << run.infeasible_step << ": " << run.first_violation << "\n";
    return kInvariant;
  }
  if (run.violation_step >= 0) {
    std::cerr << "invariant '" << run.first_violation << "' violated at step " << run.violation_step << "\n";
    return kInvariant;
  }
  return kOk;
}

int cmd_rci(const Options& o) {
  const Scenario s = load(o);
  const TubeProblem p = build_problem(s);
  const Vector r = reference_for(o, s);
  if (r.size() != s.model.output_dim()) throw Error(ErrorCode::kDimensionMismatch, "--reference has the wrong size");
  const OptimalRCI rci = solve_optimal_rci(p, r, s.controller.qp);

  json verts = json::array();
  for (const auto& v : p.tmpl.vertices(rci.y)) verts.push_back(vec_json(v));
  const json rep = {{"reference", vec_json(r)}, {"cost", rci.cost},        {"y", vec_json(rci.y)},
                    {"u", vec_json(rci.u)},     {"theta", vec_json(rci.theta)}, {"vertices", verts}};
  const auto path = output_dir(o) / "rci.json";
  std::ofstream(path) << rep.dump(2) << "\n";
  std::cout << "C_o = " << rci.cost << " (" << verts.size() << " vertices), report: " << path.string() << "\n";
  return kOk;
}

int cmd_region(const Options& o) {
  const Scenario s = load(o);
  const TrackingMPC c = build_controller(s);
  const Vector r = reference_for(o, s);
  const double h = s.simulation.region_resolution;
  const auto dir = output_dir(o);

  const auto t0 = std::chrono::steady_clock::now();
  const RegionProbe probe = feasible_region_probe(c, r, h, true, 1e-5, o.threads);
  const double probe_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::ofstream grid(dir / "region_grid.csv");
    grid.precision(17);
    for (size_t i = 0; i < probe.points.size(); ++i) {
      for (Eigen::Index k = 0; k < probe.points[i].size(); ++k) grid << probe.points[i][k] << ",";
      grid << int(probe.feasible[i]) << "\n";
    }
  }

  json rep = {{"resolution", h},
              {"reference", vec_json(r)},
              {"grid_points", probe.points.size()},
              {"feasible_points", probe.num_feasible()},
              {"solves", probe.solves},
              {"probe_seconds", probe_seconds}};
  int rc = kOk;
  MRCIResult mrci;
  try {
    mrci = approximate_maximal_rci(s.model);
  } catch (const Error& e) {
    rep["mrci_error"] = e.what();
    rc = kSolver;
  }
  if (rc == kOk) {
    rep["mrci_iterations"] = mrci.iterations;
    rep["mrci_converged"] = mrci.converged;
    rep["mrci_certified"] = mrci.certified;
    if (!mrci.converged) rc = kSolver;
    if (probe.num_feasible() > s.model.state_dim()) {
      const double hd = hausdorff_distance(probe.hull(false), mrci.set);
      const double hg = hausdorff_distance(probe.hull(true), mrci.set);
      rep["hausdorff"] = hd;
      rep["hausdorff_grid_only"] = hg;
      std::cout << "Hausdorff(feasible region, MRCI) = " << hd << " (grid points only: " << hg << ")\n";
    } else {
      rep["hausdorff"] = nullptr;
      std::cout << "fewer feasible points than needed for a full-dimensional hull\n";
    }
  }
  std::ofstream(dir / "region.json") << rep.dump(2) << "\n";
  std::cout << probe.num_feasible() << " of " << probe.points.size() << " grid points feasible; report: "
            << (dir / "region.json").string() << "\n";
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Configuration-constrained tube MPC for reference tracking"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  double resolution = 0.0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("scenario", o.scenario, "Scenario file (.scn)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the scenario seed");
    sub->add_option("--output", o.output, "Output directory")->capture_default_str();
    sub->add_option("--resolution", resolution, "Grid resolution for region probing")->check(CLI::PositiveNumber);
    sub->add_option("--tolerance-overrides", o.tolerance_overrides, "Comma-separated key=value tolerance overrides");
  };
  auto* validate = app.add_subcommand("validate", "Schema, template, feasibility and weight checks");
  add_common(validate);
  validate->add_option("--export-template", o.export_template, "Write the derived template (F, E, V_j) to a file");
  auto* run = app.add_subcommand("run", "Closed-loop simulation with CSV trace and JSON summary");
  add_common(run);
  auto* rci = app.add_subcommand("rci", "Optimal RCI set for a reference");
  add_common(rci);
  rci->add_option("--reference", o.reference, "Reference r (defaults to the region reference or 0)")->delimiter(',');
  auto* region = app.add_subcommand("region", "Feasible-region probe against the maximal RCI set");
  add_common(region);
  region->add_option("--reference", o.reference, "Reference r used in the probe")->delimiter(',');
  region->add_option("--threads", o.threads, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }
  for (auto* sub : {validate, run, rci, region}) {
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--resolution")) o.resolution = resolution;
  }

  try {
    if (*validate) return cmd_validate(o);
    if (*run) return cmd_run(o);
    if (*rci) return cmd_rci(o);
    if (*region) return cmd_region(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolver;
  }
  return kOk;
}
