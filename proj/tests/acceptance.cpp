// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every check recomputes its quantity from primitives
// rather than trusting the flags the simulator records.

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "cctmpc/error.hpp"
#include "cctmpc/scenario.hpp"
#include "cctmpc/simulator.hpp"

using namespace cctmpc;

namespace {

const std::string kDir = CCTMPC_SCENARIO_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Scenario illustrative() { return read_scenario(kDir + "/illustrative.scn"); }

// 1. Q + gamma^2 P <= P for the vertex-spread recipe.
Outcome terminal_pair() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = illustrative();
  const TubeProblem p = build_problem(s);
  const MPCConfig cfg = build_mpc_config(s, p);
  const Matrix m = cfg.Q + cfg.gamma * cfg.gamma * cfg.P - cfg.P;
  const double worst = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (m + m.transpose())).eigenvalues().maxCoeff();
  const double q_min = Eigen::SelfAdjointEigenSolver<Matrix>(cfg.Q).eigenvalues().minCoeff();
  const double dt = seconds_since(t0);
  return {worst <= 1e-9 && q_min > 0.0 && dt < 1.0 && cfg.Q.rows() == 24,
          fmt("max eig(Q + g^2 P - P) = %.3e, min eig(Q) = %.3e, dim %d, %.3f s", worst, q_min, int(cfg.Q.rows()), dt)};
}

// 2. M(y~+) + V(y, y~+) <= M(y) + 1e-6 on sampled terminal-feasible points.
Outcome terminal_descent() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = illustrative();
  const TrackingMPC c = build_controller(s);
  const double g = c.config().gamma;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise;
  int sampled = 0, attempts = 0;
  double worst = -kInfinity;
  while (sampled < 200 && attempts < 2000) {
    ++attempts;
    Vector x(2);
    x << -5.0 + 10.0 * unif(rng), -2.0 + 5.0 * unif(rng);
    const Vector r = Vector::Constant(1, -5.0 + 10.0 * unif(rng));
    const MPCSolution sol = c.solve(x, r);
    if (!sol.feasible()) continue;
    // Blends of y_s* and y_N* stay in the (convex) terminal set; a perturbed
    // copy is used instead when it is still terminal-feasible.
    const Vector base = sol.ys + unif(rng) * (sol.y[c.config().N] - sol.ys);
    Vector y = base + 0.01 * Vector::NullaryExpr(base.size(), [&] { return noise(rng); });
    double m = c.terminal_cost(y, sol.ys, sol.us);
    if (!std::isfinite(m)) {
      y = base;
      m = c.terminal_cost(y, sol.ys, sol.us);
    }
    if (!std::isfinite(m)) continue;
    const Vector yp = g * y + (1.0 - g) * sol.ys;
    const double mp = c.terminal_cost(yp, sol.ys, sol.us);
    const double v = c.cost_to_travel(y, yp, sol.ys, sol.us);
    worst = std::max(worst, mp + v - m);
    ++sampled;
  }
  const double dt = seconds_since(t0);
  return {sampled == 200 && worst <= 1e-6 && dt < 120.0,
          fmt("%d samples (%d attempts), worst M(y+) + V - M(y) = %.3e, %.1f s", sampled, attempts, worst, dt)};
}

// 3. No mid-run infeasibility under extreme and adversarial disturbances.
Outcome recursive_feasibility() {
  const auto t0 = std::chrono::steady_clock::now();
  int runs = 0, infeasible = 0, flagged = 0;
  for (DisturbancePolicy policy : {DisturbancePolicy::kExtremeCycling, DisturbancePolicy::kAdversarial}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Scenario s = illustrative();
      s.simulation.steps = 50;
      s.simulation.disturbance = policy;
      s.simulation.seed = seed;
      const RunResult run = run_closed_loop(s);
      ++runs;
      infeasible += run.mid_run_infeasible || run.steps.size() != 50;
      for (const StepRecord& r : run.steps) flagged += !r.flags.all();
    }
  }
  return {infeasible == 0, fmt("%d runs x 50 steps, %d infeasible runs, %d steps with any flag down, %.1f s", runs,
                               infeasible, flagged, seconds_since(t0))};
}

// 4. Lyapunov floor, strict descent off target, settling around the flip.
Outcome lyapunov_behavior() {
  const Scenario s = illustrative();
  const Tolerances tol;
  const RunResult run = run_closed_loop(s);
  if (!run.steps.size()) return {false, "no steps"};
  double min_l = kInfinity;
  int descent_checked = 0, descent_failed = 0, vacuous = 0;
  int before = -1, after = -1;
  const int flip = 15;
  for (size_t t = 0; t < run.steps.size(); ++t) {
    const StepRecord& r = run.steps[t];
    min_l = std::min(min_l, r.lyapunov);
    if (r.lyapunov <= 1e-3 && int(t) < flip && before < 0) before = int(t);
    if (r.lyapunov <= 1e-3 && int(t) >= flip && after < 0) after = int(t);
    if (t == 0 || int(t) == flip) continue;
    const StepRecord& q = run.steps[t - 1];
    const double gap = (q.solution.y[0] - q.solution.ys).cwiseAbs().maxCoeff();
    if (gap <= tol.tracking_gap) continue;
    // The margin cannot be met once L is below it.
    if (q.lyapunov <= tol.strict_descent) {
      ++vacuous;
      descent_failed += r.lyapunov > q.lyapunov + tol.lyapunov_slack;
      continue;
    }
    ++descent_checked;
    descent_failed += !(r.lyapunov < q.lyapunov - tol.strict_descent);
  }
  const bool settled = before >= 0 && after >= 0 && after - flip <= 20;
  return {run.ok() && min_l >= -1e-6 && descent_failed == 0 && settled,
          fmt("min L = %.3e, descent %d/%d strict (%d steps with L below the margin), L <= 1e-3 at t = %d and t = %d",
              min_l, descent_checked - descent_failed, descent_checked, vacuous, before, after)};
}

// 5. Tube trajectory converges to the optimal RCI set for r = 5.
Outcome convergence() {
  Scenario s = illustrative();
  s.simulation.steps = 31;
  s.simulation.disturbance = DisturbancePolicy::kZero;
  s.simulation.references = {{0, Vector::Constant(1, 5.0)}};
  const TubeProblem p = build_problem(s);
  const OptimalRCI o = solve_optimal_rci(p, Vector::Constant(1, 5.0), s.controller.qp);
  const RunResult run = run_closed_loop(s);
  int first = -1;
  double last = kInfinity;
  for (const StepRecord& r : run.steps) {
    double e = (r.solution.ys - o.y).cwiseAbs().maxCoeff();
    for (const Vector& y : r.solution.y) e = std::max(e, (y - o.y).cwiseAbs().maxCoeff());
    if (e <= 1e-3 && first < 0) first = r.t;
    if (e > 1e-3) first = -1;
    last = e;
  }
  return {run.ok() && first >= 0 && first <= 30,
          fmt("max deviation from y_o(5) below 1e-3 from t = %d on, %.3e at t = 30", first, last)};
}

// 6. Hausdorff distance between the feasible region and the MRCI set.
Outcome hausdorff() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = illustrative();
  const TrackingMPC c = build_controller(s);
  const RegionProbe probe = feasible_region_probe(c, Vector::Zero(1), 0.05, true, 1e-5);
  const MRCIResult mrci = approximate_maximal_rci(s.model);
  const double h = hausdorff_distance(probe.hull(false), mrci.set);
  const double hg = hausdorff_distance(probe.hull(true), mrci.set);
  const double dt = seconds_since(t0);
  return {mrci.converged && std::abs(h - 0.0179) <= 0.005 && dt < 900.0,
          fmt("H = %.5f (target 0.0179 +- 0.005; grid points only %.5f), %d/%zu grid points feasible, MRCI %s, %.0f s", h,
              hg, probe.num_feasible(), probe.points.size(), mrci.certified ? "certified" : "not certified", dt)};
}

// 7. Brute-force propagation of accepted transitions.
Outcome tube_soundness() {
  const Scenario s = illustrative();
  const TubeProblem p = build_problem(s);
  const auto ws = enumerate_vertices(s.model.disturbance_set);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int accepted = 0, attempts = 0, rejected = 0;
  double worst = -kInfinity;
  while (accepted < 500 && attempts < 200000) {
    ++attempts;
    const Vector shift = Vector::NullaryExpr(2, [&] { return n(rng); });
    Vector y = (0.2 + 2.5 * unif(rng)) * Vector::Ones(p.m()) + p.tmpl.F * shift;
    y += 0.1 * Vector::NullaryExpr(p.m(), [&] { return n(rng); });
    const Vector u = Vector::NullaryExpr(p.vu(), [&] { return -1.0 + 3.0 * unif(rng); });
    // Successor offsets from the tightest nominal bound plus random slack;
    // anything check_S rejects is discarded.
    Vector yp = Vector::Constant(p.m(), -kInfinity);
    for (int i = 0; i < p.model.num_vertices(); ++i)
      for (int j = 0; j < p.v(); ++j)
        yp = yp.cwiseMax(p.tmpl.F * (p.model.A[i] * p.tmpl.vertex(j, y) + p.model.B[i] * u.segment(j * p.nu(), p.nu())) +
                         p.d);
    yp += Vector::NullaryExpr(p.m(), [&] { return -0.05 + 0.45 * unif(rng); });
    const TubeTransition t{y, u, yp};
    if (!check_S(p.S, t, 0.0).ok) {
      ++rejected;
      continue;
    }
    ++accepted;
    // Vertices of X(y) by enumeration, independent of the vertex maps.
    for (const Vector& xv : enumerate_vertices(p.tmpl.polytope(y))) {
      // Input at an enumerated vertex: the vertex input of the matching V_j y.
      int jbest = 0;
      double dbest = kInfinity;
      for (int j = 0; j < p.v(); ++j) {
        const double d = (p.tmpl.vertex(j, y) - xv).norm();
        if (d < dbest) dbest = d, jbest = j;
      }
      const Vector uj = u.segment(jbest * p.nu(), p.nu());
      for (int i = 0; i < p.model.num_vertices(); ++i)
        for (const Vector& w : ws) {
          const Vector xn = p.model.A[i] * xv + p.model.B[i] * uj + w;
          worst = std::max(worst, (p.tmpl.F * xn - yp).maxCoeff());
        }
    }
  }
  return {accepted == 500 && worst <= 1e-6,
          fmt("%d accepted transitions (%d rejected by S), worst F x+ - y+ = %.3e", accepted, rejected, worst)};
}

// 8. Row and variable counts against the closed-form count.
Outcome builder_counts() {
  const Scenario s = illustrative();
  const TrackingMPC c = build_controller(s);
  const TubeProblem& p = c.problem();
  const int N = c.config().N, m = p.m(), v = p.v(), q = p.model.num_vertices();
  const int nhx = static_cast<int>(p.model.state_set.offsets.size()), nhu = static_cast<int>(p.model.input_set.offsets.size());
  const int block = q * v * m + v * m + v * nhx + v * nhu;
  const int formula_rows = m + (N + 1) * block;
  const int formula_vars = (N + 1) * (m + v * p.nu());
  const SizeReport rep = c.size_report();
  const QuadraticProgram full = c.build_qp(s.simulation.x0, Vector::Zero(1), ConeForm::kComplete);
  const int built_rows = full.num_constraints() - rep.steady_rows;
  const bool ok = formula_rows == 2172 && formula_vars == 144 && built_rows == formula_rows &&
                  rep.rows_before_steady == formula_rows && rep.trajectory_variables == formula_vars;
  return {ok, fmt("rows %d (built %d, expected 2172), trajectory variables %d (expected 144)", formula_rows, built_rows,
                  rep.trajectory_variables)};
}

// Membership of (A, B) in the hull of outer pairs: lambda >= 0, sum = 1.
double hull_residual(const std::pair<Matrix, Matrix>& in, const std::vector<std::pair<Matrix, Matrix>>& outer) {
  const int k = static_cast<int>(outer.size());
  const int na = static_cast<int>(in.first.size()), nb = static_cast<int>(in.second.size());
  // Equalities as two-sided rows, plus the simplex; residual slack s >= |.|.
  LinearProgram lp;
  const int rows = na + nb + 1;
  lp.constraint_matrix = Matrix::Zero(2 * rows + k, k + 1);
  lp.lower_bounds = Vector::Constant(2 * rows + k, -kInfinity);
  lp.upper_bounds = Vector::Zero(2 * rows + k);
  Vector target(rows);
  target << in.first.reshaped(), in.second.reshaped(), 1.0;
  for (int j = 0; j < k; ++j) {
    Vector col(rows);
    col << outer[j].first.reshaped(), outer[j].second.reshaped(), 1.0;
    lp.constraint_matrix.block(0, j, rows, 1) = col;
    lp.constraint_matrix.block(rows, j, rows, 1) = -col;
    lp.constraint_matrix(2 * rows + j, j) = -1.0;
  }
  lp.constraint_matrix.block(0, k, rows, 1).setConstant(-1.0);
  lp.constraint_matrix.block(rows, k, rows, 1).setConstant(-1.0);
  lp.upper_bounds.head(rows) = target;
  lp.upper_bounds.segment(rows, rows) = -target;
  lp.cost = Vector::Zero(k + 1);
  lp.cost[k] = 1.0;
  const LPResult res = solve_lp(lp);
  return res.status == LPStatus::kOptimal ? res.objective : kInfinity;
}

// 9. Lane change: feasibility, nested uncertainty hulls, shrinking tube.
Outcome lane_change() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = read_scenario(kDir + "/lane_change.scn");
  const RunResult run = run_closed_loop(s);
  const int n = static_cast<int>(run.steps.size());
  bool schedule_monotone = true;
  double worst_membership = 0.0;
  std::vector<std::pair<Matrix, Matrix>> prev;
  for (int t = 0; t < n; ++t) {
    const double v = run.steps[t].schedule;
    if (t > 0) schedule_monotone &= v >= run.steps[t - 1].schedule;
    const auto cur = restrict_uncertainty(*s.lpv, {v, s.lpv->initial_range.hi});
    if (!prev.empty())
      for (const auto& pr : cur) worst_membership = std::max(worst_membership, hull_residual(pr, prev));
    worst_membership = std::max(worst_membership, hull_residual({run.steps[t].A, run.steps[t].B}, cur));
    prev = cur;
  }
  const int start = n / 3;
  double rise_o = -kInfinity, rise_0 = -kInfinity;
  for (int t = start + 1; t < n; ++t) {
    rise_o = std::max(rise_o, run.steps[t].width_o - run.steps[t - 1].width_o);
    rise_0 = std::max(rise_0, run.steps[t].width - run.steps[t - 1].width);
  }
  const bool ok = !run.mid_run_infeasible && n == s.simulation.steps && schedule_monotone && worst_membership <= 1e-8 &&
                  rise_o <= 1e-9;
  return {ok, fmt("%d/%d steps feasible, hull membership residual %.1e, optimal RCI e_y width max rise %.1e over t >= "
                  "%d (%.4f -> %.4f); X(y0*) width max rise %.1e (not monotone, transient), %.1f s",
                  n, s.simulation.steps, worst_membership, rise_o, start, run.steps[start].width_o,
                  run.steps[n - 1].width_o, rise_0, seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"terminal pair eigencheck", terminal_pair},
      {"terminal descent on 200 samples", terminal_descent},
      {"recursive feasibility, 10 seeds x 2 policies", recursive_feasibility},
      {"Lyapunov behavior", lyapunov_behavior},
      {"convergence to the optimal RCI set", convergence},
      {"feasible-region Hausdorff distance", hausdorff},
      {"tube soundness, 500 transitions", tube_soundness},
      {"builder row and variable counts", builder_counts},
      {"lane change properties", lane_change},
  };
  int failed = 0;
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= int(criteria.size())) selected[k - 1] = true;
  }
  int ran = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu [%s] %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
