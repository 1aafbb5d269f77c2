#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cctmpc/model.hpp"
#include "cctmpc/mpc.hpp"
#include "cctmpc/rci.hpp"

namespace cctmpc {

enum class DisturbancePolicy { kZero, kUniform, kExtremeCycling, kAdversarial };
enum class PlantPolicy { kFixedVertex, kRandomConvex, kLPVSchedule };

const char* to_string(DisturbancePolicy p);
const char* to_string(PlantPolicy p);

struct ReferenceStep {
  int start = 0;
  Vector r;
};

/// Scheduling-parameter breakpoint; values are interpolated linearly between
/// breakpoints and held after the last one.
struct SchedulePoint {
  int start = 0;
  double value = 0.0;
};

struct StageWeightSpec {
  enum class Mode { kVertexSpread, kDiagonal, kExplicit };
  Mode mode = Mode::kVertexSpread;
  double regularization = 1e-3;
  double y_weight = 1.0;
  double u_weight = 1.0;
  Matrix matrix;
};

struct TerminalWeightSpec {
  enum class Mode { kRecipe, kExplicit };
  Mode mode = Mode::kRecipe;
  Matrix matrix;
};

struct ControllerSpec {
  int N = 5;
  double gamma = 0.95;
  StageWeightSpec Q;
  TerminalWeightSpec P;
  QPSettings qp;
};

/// Either F with a reference offset (configuration derived on load) or an
/// imported configuration (F, E, V_j).
struct TemplateSpec {
  Matrix F;
  Vector y_ref;
  bool imported = false;
  Matrix E;
  std::vector<Matrix> vertex_maps;
};

struct Tolerances {
  double containment = 1e-6;
  double lyapunov_floor = 1e-6;
  double lyapunov_slack = 1e-5;
  double strict_descent = 1e-7;
  double tracking_gap = 1e-4;
  double hull_membership = 1e-8;
  double settle = 1e-3;

  /// Applies "key=value[,key=value...]". Throws kSchema on unknown keys.
  void apply_overrides(const std::string& spec);
};

struct SimulationSpec {
  Vector x0;
  int steps = 0;
  std::vector<ReferenceStep> references;
  DisturbancePolicy disturbance = DisturbancePolicy::kZero;
  PlantPolicy plant = PlantPolicy::kFixedVertex;
  int plant_vertex = 0;
  std::vector<SchedulePoint> schedule;
  std::optional<std::uint64_t> seed;
  /// State coordinate used for the tube-width metric.
  int width_axis = 0;
  double region_resolution = 0.05;
  Vector region_reference;

  Vector reference_at(int t) const;
  double schedule_at(int t) const;
};

struct Scenario {
  std::string name;
  std::string description;
  /// For LPV scenarios the vertex pairs are those of the initial range.
  UncertainModel model;
  std::optional<LPVScheduler> lpv;
  TemplateSpec tmpl;
  RCICostWeights weights;
  ControllerSpec controller;
  SimulationSpec simulation;
  Tolerances tolerances;
};

/// Parses scenario text. Every key is checked before any numeric work;
/// unknown keys, wrong types and inconsistent sizes throw kSchema naming the
/// offending path. base_dir resolves template imports.
Scenario parse_scenario(const std::string& text, const std::string& base_dir = ".");
Scenario read_scenario(const std::string& path);

/// Full-precision text; parse_scenario(dump_scenario(s)) reproduces s.
std::string dump_scenario(const Scenario& s, bool embed_derived_template = false);
void write_scenario(const std::string& path, const Scenario& s, bool embed_derived_template = false);

TemplateConfig build_template(const TemplateSpec& spec);
std::string dump_template(const TemplateConfig& tmpl);
TemplateSpec parse_template(const std::string& text);

TubeProblem build_problem(const Scenario& s);
MPCConfig build_mpc_config(const Scenario& s, const TubeProblem& problem);
TrackingMPC build_controller(const Scenario& s);

struct ValidationCheck {
  std::string name;
  bool ok = true;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool ok() const;
  /// First failing check, or nullptr.
  const ValidationCheck* first_failure() const;
};

/// Model and template invariants, the feasibility probe at r = 0 and the
/// controller weight conditions, run in that order; stops at the first
/// structural failure.
ValidationReport validate_scenario(const Scenario& s);

}  // namespace cctmpc
