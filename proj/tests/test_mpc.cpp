#include <doctest.h>

#include <random>

#include "cctmpc/error.hpp"
#include "cctmpc/mpc.hpp"
#include "fixtures.hpp"

using namespace cctmpc;

TEST_CASE("config validation") {
  const TubeProblem p = fixtures::illustrative_problem();
  const int dim = p.m() + p.vu();
  MPCConfig cfg;
  cfg.N = 5;
  cfg.gamma = 0.95;
  cfg.Q = vertex_spread_weight(p, 1e-3);
  cfg.P = terminal_weight(cfg.Q, cfg.gamma);
  const ConfigReport ok = validate_config(cfg, dim);
  CHECK(ok.ok);
  CHECK(std::abs(ok.worst_eigenvalue) <= 1e-9);

  MPCConfig bad = cfg;
  bad.Q = bad.P = Matrix::Identity(dim, dim);
  bad.gamma = 0.5;
  const ConfigReport r = validate_config(bad, dim);
  CHECK_FALSE(r.ok);
  CHECK(r.worst_eigenvalue == doctest::Approx(-0.25));

  bad = cfg;
  bad.gamma = 1.0;
  CHECK(validate_config(bad, dim).message.find("gamma") != std::string::npos);
  bad = cfg;
  bad.N = 0;
  CHECK_FALSE(validate_config(bad, dim).ok);
  bad = cfg;
  bad.Q(0, 0) = -1.0;
  CHECK(validate_config(bad, dim).message.find("Q is not positive definite") != std::string::npos);
  CHECK_THROWS_AS(TrackingMPC(fixtures::illustrative_problem(), bad), Error);
}

TEST_CASE("problem size matches the closed-form count") {
  const TrackingMPC c = fixtures::illustrative_controller();
  const SizeReport s = c.size_report();
  CHECK(s.rows_before_steady == 2172);
  CHECK(s.formula_rows == 2172);
  CHECK(s.trajectory_variables == 144);
  CHECK(s.extra_variables == 12 + 12 + 1);
  CHECK(s.matches());
  const QuadraticProgram full = c.build_qp(Vector::Zero(2), vec({0}), ConeForm::kComplete);
  CHECK(full.num_constraints() == s.total_rows);
  CHECK(full.num_variables() == 144 + 25);
}

TEST_CASE("optimal RCI set is a fixed point") {
  const TrackingMPC c = fixtures::illustrative_controller();
  const Vector r = vec({5.0});
  const OptimalRCI o = solve_optimal_rci(c.problem(), r);
  const Vector x = c.problem().tmpl.mean_vertex_map * o.y;
  const MPCSolution s = c.solve(x, r);
  REQUIRE(s.feasible());
  CHECK(s.objective == doctest::Approx(o.cost).epsilon(1e-8));
  for (const auto& y : s.y) CHECK((y - o.y).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK((s.ys - o.y).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(c.lyapunov_value(x, r) == doctest::Approx(0.0).epsilon(1e-6));

  const MPCSolution cand = c.shifted_candidate(s);
  for (int k = 0; k <= 5; ++k) CHECK((cand.y[k] - s.y[k]).norm() <= 1e-5);
}

TEST_CASE("reference initial state is feasible, far states are not") {
  const TrackingMPC c = fixtures::illustrative_controller();
  const Vector x0 = vec({-3.12, 2.95});
  const MPCSolution s = c.solve(x0, vec({5.0}));
  REQUIRE(s.feasible());
  const SolutionCheck chk = c.check_solution(s, x0, 1e-6);
  CHECK_MESSAGE(chk.ok, chk.where << " " << chk.worst);
  CHECK(s.objective >= solve_optimal_rci(c.problem(), vec({5.0})).cost - 1e-6);
  CHECK(c.solve(vec({9.0, 0.0}), vec({5.0})).status == QPStatus::kInfeasible);
  CHECK_THROWS_AS(c.lyapunov_value(vec({9.0, 0.0}), vec({5.0})), Error);
}

TEST_CASE("shifted candidate stays feasible for every successor") {
  const TrackingMPC c = fixtures::illustrative_controller();
  const auto& p = c.problem();
  const Vector x0 = vec({-3.12, 2.95});
  const MPCSolution s = c.solve(x0, vec({5.0}));
  REQUIRE(s.feasible());
  const MPCSolution cand = c.shifted_candidate(s);
  const auto ws = p.model.disturbance_vertices();
  for (int j = 0; j < p.v(); ++j)
    for (const auto& w : ws) {
      const Vector xp = p.model.A[0] * p.tmpl.vertex(j, s.y[0]) + p.model.B[0] * s.u[0].segment(j, 1) + w;
      const SolutionCheck chk = c.check_solution(cand, xp, 1e-6);
      CHECK_MESSAGE(chk.ok, chk.where << " " << chk.worst);
    }
  // The candidate scores no worse than the optimum minus the first stage.
  const double stage0 = [&] {
    Vector e(p.m() + p.vu());
    e << s.y[0] - s.ys, s.u[0] - s.us;
    return e.dot(c.config().Q * e);
  }();
  CHECK(c.objective(cand, vec({5.0})) <= s.objective - stage0 + 1e-6);
}

TEST_CASE("warm start reproduces the cold optimum") {
  const TrackingMPC c = fixtures::illustrative_controller();
  const Vector x0 = vec({-3.12, 2.95});
  const MPCSolution s = c.solve(x0, vec({5.0}));
  const auto& p = c.problem();
  const Vector xp = p.model.A[0] * x0 + p.model.B[0] * s.u[0].segment(0, 1);
  const MPCSolution cold = c.solve(xp, vec({-5.0}));
  const MPCSolution warm = c.solve(xp, vec({-5.0}), c.shifted_candidate(s));
  REQUIRE(cold.feasible());
  REQUIRE(warm.feasible());
  CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-6));
}

TEST_CASE("cost-to-travel and terminal cost") {
  const TrackingMPC c = fixtures::illustrative_controller();
  const auto& p = c.problem();
  const OptimalRCI o = solve_optimal_rci(p, vec({2.0}));
  CHECK(c.cost_to_travel(o.y, o.y, o.y, o.u) == doctest::Approx(0.0));
  CHECK(c.terminal_cost(o.y, o.y, o.u) == doctest::Approx(0.0));
  CHECK(std::isinf(c.cost_to_travel(o.y, o.y - 0.01 * Vector::Ones(12), o.y, o.u)));
  CHECK(std::isinf(c.terminal_cost(0.01 * Vector::Ones(12), o.y, o.u)));

  // Minimization bound against sampled admissible inputs.
  const Vector x0 = vec({-3.12, 2.95});
  const MPCSolution s = c.solve(x0, vec({5.0}));
  const Vector y1 = s.y[1] + 0.3 * Vector::Ones(12);
  const double v = c.cost_to_travel(s.y[0], y1, s.ys, s.us);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int tested = 0;
  for (int k = 0; k < 2000 && tested < 20; ++k) {
    // Clamped into the input box, since several vertex inputs sit on its boundary.
    const Vector u = (s.u[0] + 0.2 * Vector::NullaryExpr(12, [&] { return unif(rng) - 0.5; }))
                         .cwiseMax(-1.0)
                         .cwiseMin(2.0);
    if (!check_S(p.S, {s.y[0], u, y1}, 1e-9).ok) continue;
    ++tested;
    Vector e(24);
    e << s.y[0] - s.ys, u - s.us;
    CHECK(v <= e.dot(c.config().Q * e) + 1e-9);
  }
  CHECK(tested == 20);

  // Contraction of the terminal cost along the gamma blend.
  for (double rv : {-5.0, 0.0, 5.0}) {
    const MPCSolution t = c.solve(x0, vec({rv}));
    const Vector yb = t.y[5];
    const double g = c.config().gamma;
    const double mb = c.terminal_cost(yb, t.ys, t.us);
    REQUIRE(std::isfinite(mb));
    CHECK(c.terminal_cost(g * yb + (1 - g) * t.ys, t.ys, t.us) <= g * g * mb + 1e-6);
  }
}

TEST_CASE("LPV update rebuilds the cost and dynamics") {
  TrackingMPC c = fixtures::illustrative_controller(2);
  Matrix a2 = c.problem().model.A[0];
  a2(0, 0) = 1.12;
  c.update_vertex_pairs({{c.problem().model.A[0], c.problem().model.B[0]}, {a2, c.problem().model.B[0]}});
  CHECK(c.problem().S.dynamics_rows == 2 * 12 * 12);
  const MPCSolution s = c.solve(vec({0.0, 0.0}), vec({1.0}));
  CHECK(s.feasible());
}
