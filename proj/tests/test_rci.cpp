#include <doctest.h>

#include <random>

#include "cctmpc/error.hpp"
#include "fixtures.hpp"

using namespace cctmpc;

namespace {

// Scalar cost written directly from the vertex-spread and center terms.
double ell_formula(const TubeProblem& p, const Vector& y, const Vector& u, const Vector& theta, const Vector& r) {
  const int v = p.v(), nu = p.nu(), nx = p.model.state_dim();
  Vector ubar = Vector::Zero(nu);
  for (int j = 0; j < v; ++j) ubar += u.segment(j * nu, nu);
  ubar /= v;
  const Vector xbar = p.tmpl.mean_vertex_map * y;
  double l1 = 0.0;
  for (int j = 0; j < v; ++j) {
    Vector e(nx + nu);
    e << xbar - p.tmpl.vertex(j, y), ubar - u.segment(j * nu, nu);
    l1 += e.dot(p.weights.Qv * e);
  }
  Vector c(nx + nu);
  c << xbar, ubar;
  const Vector ss = p.basis.M * theta;
  Matrix cd(p.model.output_dim(), nx + nu);
  cd << p.model.C, p.model.D;
  const Vector er = r - cd * ss;
  return l1 + (c - ss).dot(p.weights.Qc * (c - ss)) + er.dot(p.weights.Qr * er) +
         p.weights.theta_regularization * theta.squaredNorm();
}

Vector best_theta(const TubeProblem& p, const Vector& y, const Vector& u, const Vector& r) {
  const int nt = p.ell.ntheta, nz = p.m() + p.vu();
  Vector z(nz);
  z << y, u;
  const Matrix htt = p.ell.H.bottomRightCorner(nt, nt);
  const Vector g = p.ell.H.bottomLeftCorner(nt, nz) * z + p.ell.G.bottomRows(nt) * r;
  return -htt.ldlt().solve(g);
}

}  // namespace

TEST_CASE("ell matches its defining formula") {
  const TubeProblem p = fixtures::illustrative_problem();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  const int dim = p.ell.dim();
  for (int trial = 0; trial < 5; ++trial) {
    const Vector w = Vector::NullaryExpr(dim, [&] { return n(rng); });
    const Vector r = Vector::NullaryExpr(1, [&] { return 3.0 * n(rng); });
    auto f = [&](const Vector& x) {
      return ell_formula(p, x.head(p.m()), x.segment(p.m(), p.vu()), x.tail(p.ell.ntheta), r);
    };
    CHECK(p.ell.value(w.head(p.m()), w.segment(p.m(), p.vu()), w.tail(p.ell.ntheta), r) ==
          doctest::Approx(f(w)).epsilon(1e-10));
    const double h = 1e-2;
    double worst = 0.0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        Vector a = w, b = w, c = w, d = w;
        a[i] += h, a[j] += h;
        b[i] += h, b[j] -= h;
        c[i] -= h, c[j] += h;
        d[i] -= h, d[j] -= h;
        const double fd = (f(a) - f(b) - f(c) + f(d)) / (4 * h * h);
        worst = std::max(worst, std::abs(fd - p.ell.H(i, j)) / std::max(1.0, std::abs(p.ell.H(i, j))));
      }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("ell vanishes on a steady point tube") {
  const TubeProblem p = fixtures::illustrative_problem();
  const Vector theta = vec({0.7});
  const Vector ss = p.basis.M * theta;
  const Vector y = p.tmpl.F * ss.head(2);
  const Vector u = Vector::Constant(p.vu(), ss[2]);
  const Vector r = p.model.C * ss.head(2);
  CHECK(std::abs(p.ell.value(y, u, theta, r)) <= 1e-10);
}

TEST_CASE("ell scales with the weights") {
  RCICostWeights w = fixtures::illustrative_weights();
  const TubeProblem p = fixtures::illustrative_problem();
  w.Qv *= 3.0, w.Qc *= 3.0, w.Qr *= 3.0, w.theta_regularization *= 3.0;
  const EllForm scaled = assemble_ell(p.tmpl, p.basis, w, p.model);
  CHECK((scaled.H - 3.0 * p.ell.H).norm() <= 1e-9 * p.ell.H.norm());
  CHECK((scaled.G - 3.0 * p.ell.G).norm() <= 1e-9 * p.ell.G.norm());
  CHECK(p.ell.reduced_min_eigenvalue() > 0.0);
}

TEST_CASE("weights are validated") {
  RCICostWeights w = fixtures::illustrative_weights();
  w.Qv(0, 0) = -1.0;
  CHECK_THROWS_WITH_AS(w.validate(2, 1, 1), doctest::Contains("Q_v"), Error);
  w = fixtures::illustrative_weights();
  CHECK_THROWS_AS(w.validate(3, 1, 1), Error);
}

TEST_CASE("optimal RCI set for the illustrative system") {
  const TubeProblem p = fixtures::illustrative_problem();
  for (double rv : {5.0, 0.0, -5.0}) {
    const Vector r = vec({rv});
    const OptimalRCI o = solve_optimal_rci(p, r);
    CHECK(check_S(p.S, {o.y, o.u, o.y}, 1e-6).ok);
    for (const auto& x : p.tmpl.vertices(o.y)) CHECK(p.model.state_set.contains(x, 1e-6));
    CHECK(std::isfinite(o.cost));
    CHECK(o.cost == doctest::Approx(ell_formula(p, o.y, o.u, o.theta, r)).epsilon(1e-8));
  }
  // Regression constant for r = 5, cross-checked against a conic solver.
  const OptimalRCI o5 = solve_optimal_rci(p, vec({5.0}));
  MESSAGE("C_o(5) = " << o5.cost);
  CHECK(o5.cost == doctest::Approx(69.559705).epsilon(1e-7));
}

TEST_CASE("optimal RCI cost lower-bounds feasible fixed points") {
  const TubeProblem p = fixtures::illustrative_problem();
  std::vector<OptimalRCI> anchors;
  for (double rv : {-5.0, -2.0, 0.0, 3.0, 5.0}) anchors.push_back(solve_optimal_rci(p, vec({rv})));
  std::mt19937_64 rng(9);
  std::gamma_distribution<double> g(1.0);
  for (double rv : {-4.0, 1.0, 5.0}) {
    const Vector r = vec({rv});
    const double co = solve_optimal_rci(p, r).cost;
    for (int k = 0; k < 40; ++k) {
      Vector lam(anchors.size());
      for (auto& l : lam) l = g(rng);
      lam /= lam.sum();
      Vector y = Vector::Zero(p.m()), u = Vector::Zero(p.vu());
      for (size_t a = 0; a < anchors.size(); ++a) y += lam[a] * anchors[a].y, u += lam[a] * anchors[a].u;
      REQUIRE(check_S(p.S, {y, u, y}, 1e-7).ok);
      CHECK(ell_formula(p, y, u, best_theta(p, y, u, r), r) >= co - 1e-6);
    }
  }
}

TEST_CASE("infeasible RCI fixture") {
  UncertainModel m = fixtures::illustrative_model();
  m.A = {2.0 * Matrix::Identity(2, 2)};
  m.input_set = HPolytope::box(vec({0}), vec({0}));
  m.disturbance_set = HPolytope::symmetric_box(vec({0.1, 0.1}));
  const TubeProblem p = TubeProblem::build(m, derive_configuration(fixtures::twelve_gon(), Vector::Ones(12)),
                                           fixtures::illustrative_weights());
  try {
    solve_optimal_rci(p, vec({0.0}));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInfeasible);
  }
}

TEST_CASE("maximal RCI approximation") {
  SUBCASE("invariant state set") {
    UncertainModel m = fixtures::illustrative_model();
    m.A = {0.5 * Matrix::Identity(2, 2)};
    m.B = {Matrix::Zero(2, 1)};
    m.disturbance_set = HPolytope::symmetric_box(Vector::Zero(2));
    const MRCIResult r = approximate_maximal_rci(m);
    CHECK(r.converged);
    CHECK(hausdorff_distance(r.set, m.state_set) <= 1e-9);
  }
  SUBCASE("illustrative system") {
    const TubeProblem p = fixtures::illustrative_problem();
    const MRCIResult r = approximate_maximal_rci(p.model);
    CHECK(r.converged);
    CHECK(r.certified);
    for (double rv : {-5.0, 0.0, 5.0})
      for (const auto& x : p.tmpl.vertices(solve_optimal_rci(p, vec({rv})).y)) CHECK(r.set.contains(x, 1e-6));
  }
  SUBCASE("no control authority") {
    UncertainModel m = fixtures::illustrative_model();
    m.A = {2.0 * Matrix::Identity(2, 2)};
    m.input_set = HPolytope::box(vec({0}), vec({0}));
    m.disturbance_set = HPolytope::symmetric_box(vec({0.1, 0.1}));
    CHECK_THROWS_AS(approximate_maximal_rci(m), Error);
  }
}
