#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "cctmpc/mpc.hpp"
#include "cctmpc/scenario.hpp"
#include "cctmpc/vertex_control.hpp"

namespace cctmpc {

/// Per-step invariant flags. Flags that do not apply at a step stay true.
struct StepFlags {
  bool state_admissible = true;    // x_t in the state set
  bool input_admissible = true;    // u_t in the input set
  bool initial_row = true;         // x_t in X(y_0*)
  bool successor_in_tube = true;   // x_{t+1} in X(y_1*)
  bool lyapunov_nonnegative = true;
  bool descent = true;             // constant r and model: non-increasing, strict while off target
  bool candidate_feasible = true;  // shifted candidate passes every row at x_t
  bool hull_nested = true;         // restricted vertex hull inside the previous one
  bool plant_in_hull = true;       // realized (A, B) inside the current vertex hull

  bool all() const;
  /// Name of the first false flag, or empty.
  std::string first_failed() const;
};

struct StepRecord {
  int t = 0;
  Vector x;
  Vector u;
  Vector z;
  Vector r;
  Matrix A;
  Matrix B;
  Vector w;
  /// Scheduling parameter of the LPV plant; NaN otherwise.
  double schedule = 0.0;
  MPCSolution solution;
  Vector y_o;
  double cost = 0.0;
  double cost_o = 0.0;
  double lyapunov = 0.0;
  /// max_j - min_j of the width axis over the vertices of X(y_0*).
  double width = 0.0;
  /// Same extent for X(y_s*) and X(y_o(r_t)).
  double width_s = 0.0;
  double width_o = 0.0;
  InterpolationWeights lambda;
  double solve_seconds = 0.0;
  double state_margin = 0.0;
  double input_margin = 0.0;
  StepFlags flags;
};

struct RunResult {
  std::vector<StepRecord> steps;
  std::uint64_t seed = 0;
  bool mid_run_infeasible = false;
  int infeasible_step = -1;
  std::string first_violation;
  int violation_step = -1;

  bool ok() const { return !mid_run_infeasible && violation_step < 0; }
};

/// Closed loop x+ = A_t x + B_t mu(x, r_t) + w_t. Throws kInfeasibleAtStart
/// if the first solve fails. A later infeasible solve stops the run and is
/// reported through mid_run_infeasible; invariant failures are recorded per
/// step without stopping.
RunResult run_closed_loop(const Scenario& s);

/// W-vertex maximizing the next optimal cost, each solve warm-started from
/// the shifted candidate. Ties (1e-9 relative) go to the lowest index.
Vector adversarial_disturbance(const TrackingMPC& controller, const MPCSolution& current, const Vector& x_next_nominal,
                               const Vector& r, const std::vector<Vector>& vertices);

// ---------------------------------------------------------------------------

struct RegionProbe {
  double resolution = 0.0;
  Vector lower;
  Vector upper;
  std::vector<Vector> points;
  std::vector<char> feasible;
  /// Feasible end points of every grid line, refined by bisection.
  std::vector<Vector> boundary;
  int solves = 0;

  int num_feasible() const;
  /// Hull of the feasible grid points (grid_only) or of grid points and
  /// refined boundary points.
  HPolytope hull(bool grid_only = false) const;
};

/// Solves the MPC on a grid over the bounding box of the state set. With
/// refine, every grid line gets its end points located to refine_tolerance.
/// Lines run in parallel over threads (0 = hardware concurrency), each
/// worker holding its own controller copy.
RegionProbe feasible_region_probe(const TrackingMPC& controller, const Vector& r, double resolution, bool refine = true,
                                  double refine_tolerance = 1e-6, int threads = 0);

// ---------------------------------------------------------------------------

struct RunSummary {
  int steps = 0;
  double final_lyapunov = 0.0;
  double max_lyapunov = 0.0;
  /// First step after the last reference change from which L stays below
  /// the settle tolerance; -1 if never.
  int settle_time = -1;
  double min_state_margin = 0.0;
  double max_state_margin = 0.0;
  double min_input_margin = 0.0;
  double max_input_margin = 0.0;
  double total_solve_seconds = 0.0;
  int flag_failures = 0;
};

RunSummary summarize(const RunResult& run, const Tolerances& tol);

/// One row per step; the column order is given by trace_csv_header.
std::string trace_csv_header(const RunResult& run);
void write_trace_csv(std::ostream& out, const RunResult& run);
void write_summary_json(std::ostream& out, const Scenario& s, const RunResult& run, const RunSummary& summary);

}  // namespace cctmpc
