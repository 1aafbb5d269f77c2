#include <doctest.h>

#include <random>

#include "cctmpc/tube.hpp"
#include "fixtures.hpp"

using namespace cctmpc;

namespace {

Matrix lane_change_template() {
  Matrix t(4, 4);
  t << 0.0712, -0.2667, 0.2667, 0.0712, 2.5077, 0, 0, -1.4923, -0.0718, -0.0024, -0.1472, -0.0011, 0, 1.1729,
      1.8271, 0;
  Matrix s(8, 4);
  s << Matrix::Identity(4, 4), -Matrix::Identity(4, 4);
  return s * t.inverse();
}

// Random transition accepted by the block: y in the cone, small inputs, and
// y+ at the tightest dynamics bound plus nonnegative slack.
std::optional<TubeTransition> sample_transition(const TubeProblem& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Vector shift = Vector::NullaryExpr(2, [&] { return n(rng); });
  Vector y = (0.3 + 2.0 * unif(rng)) * Vector::Ones(p.m()) + p.tmpl.F * shift;
  y += 0.1 * Vector::NullaryExpr(p.m(), [&] { return n(rng); });
  if (!p.tmpl.in_cone(y, 0.0)) return std::nullopt;
  const Vector u = Vector::NullaryExpr(p.vu(), [&] { return 0.5 + 1.5 * (unif(rng) - 0.5); });
  Vector yp = Vector::Constant(p.m(), -kInfinity);
  for (int i = 0; i < p.model.num_vertices(); ++i)
    for (int j = 0; j < p.v(); ++j)
      yp = yp.cwiseMax(p.tmpl.F * (p.model.A[i] * p.tmpl.vertex(j, y) + p.model.B[i] * u.segment(j * p.nu(), p.nu())) +
                       p.d);
  yp += 0.2 * Vector::NullaryExpr(p.m(), [&] { return unif(rng); });
  TubeTransition t{y, u, yp};
  if (!check_S(p.S, t, 0.0).ok) return std::nullopt;
  return t;
}

}  // namespace

TEST_CASE("block row counts") {
  const TubeProblem p = fixtures::illustrative_problem();
  CHECK(p.S.dynamics_rows == 1 * 12 * 12);
  CHECK(p.S.state_rows == 12 * 4);
  CHECK(p.S.input_rows == 12 * 2);
  CHECK(p.S.rows() == p.S.dynamics_rows + p.S.cone_rows + p.S.state_rows + p.S.input_rows);
  const SConstraintBlock full = build_S_block(p.model, p.tmpl, p.d, ConeForm::kComplete);
  CHECK(full.cone_rows == 12 * 12);
  CHECK(full.rows() == 12 * (12 * 1 + 12 + 4 + 2));

  UncertainModel lane;
  for (int i = 0; i < 4; ++i) {
    lane.A.push_back((0.9 + 0.01 * i) * Matrix::Identity(4, 4));
    lane.B.push_back(Matrix::Ones(4, 2));
  }
  lane.C = Matrix::Zero(1, 4);
  lane.D = Matrix::Zero(1, 2);
  lane.state_set = HPolytope::symmetric_box(vec({3, 4, 0.349, 3}));
  lane.input_set = HPolytope::symmetric_box(vec({0.1745, 2}));
  lane.disturbance_set = HPolytope::symmetric_box(Vector::Zero(4));
  const TemplateConfig lt = derive_configuration(lane_change_template(), Vector::Ones(8));
  const SConstraintBlock lb = build_S_block(lane, lt, Vector::Zero(8));
  CHECK(lb.dynamics_rows == 4 * 16 * 8);
}

TEST_CASE("invariant fixture satisfies the block") {
  UncertainModel m = fixtures::illustrative_model();
  m.A = {0.5 * Matrix::Identity(2, 2)};
  m.disturbance_set = HPolytope::symmetric_box(Vector::Zero(2));
  const TemplateConfig t = derive_configuration(fixtures::twelve_gon(), Vector::Ones(12));
  const SConstraintBlock b = build_S_block(m, t, disturbance_bound(m, t));
  const TubeTransition tr{Vector::Ones(12), Vector::Zero(12), Vector::Ones(12)};
  const SCheck c = check_S(b, tr, 1e-9);
  CHECK(c.ok);
  CHECK(c.worst <= 0.0);
}

TEST_CASE("violations are reported by group") {
  const TubeProblem p = fixtures::illustrative_problem();
  TubeTransition tr{Vector::Ones(12), Vector::Zero(12), 100.0 * Vector::Ones(12)};
  CHECK(check_S(p.S, tr, 1e-9).ok);

  tr.y[0] = 3.0;  // facet far outside its neighbours
  const SCheck c = check_S(p.S, tr, 1e-9);
  CHECK_FALSE(c.ok);
  CHECK(c.group == RowGroup::kCone);

  tr.y = Vector::Ones(12);
  tr.y_plus = Vector::Ones(12);
  const SCheck d = check_S(p.S, tr, 1e-9);
  CHECK_FALSE(d.ok);
  CHECK(d.group == RowGroup::kDynamics);

  tr.y_plus = 100.0 * Vector::Ones(12);
  tr.u = 5.0 * Vector::Ones(12);
  const SCheck e = check_S(p.S, tr, 1e-9);
  CHECK(e.group == RowGroup::kInput);

  tr.u.setZero();
  tr.y = 6.0 * Vector::Ones(12);
  const SCheck f = check_S(p.S, tr, 1e-9);
  CHECK(f.group == RowGroup::kState);
}

TEST_CASE("accepted transitions propagate into the successor tube") {
  const TubeProblem p = fixtures::illustrative_problem();
  const auto ws = p.model.disturbance_vertices();
  std::mt19937_64 rng(42);
  int accepted = 0;
  double worst = -kInfinity;
  std::optional<TubeTransition> prev;
  for (int attempt = 0; attempt < 20000 && accepted < 300; ++attempt) {
    const auto t = sample_transition(p, rng);
    if (!t) continue;
    ++accepted;
    for (int i = 0; i < p.model.num_vertices(); ++i)
      for (int j = 0; j < p.v(); ++j)
        for (const auto& w : ws) {
          const Vector x = p.model.A[i] * p.tmpl.vertex(j, t->y) + p.model.B[i] * t->u.segment(j, 1) + w;
          worst = std::max(worst, (p.tmpl.F * x - t->y_plus).maxCoeff());
        }
    if (prev) {
      const TubeTransition mid{0.5 * (t->y + prev->y), 0.5 * (t->u + prev->u), 0.5 * (t->y_plus + prev->y_plus)};
      CHECK(check_S(p.S, mid, 1e-9).ok);
    }
    prev = t;
  }
  CHECK(accepted == 300);
  CHECK(worst <= 1e-6);
}

TEST_CASE("dynamics regeneration matches a rebuild") {
  TubeProblem p = fixtures::illustrative_problem();
  UncertainModel m = p.model;
  Matrix a2 = m.A[0];
  a2(0, 0) = 1.2;
  apply_vertex_pairs(m, {{m.A[0], m.B[0]}, {a2, m.B[0]}});
  SConstraintBlock updated = p.S;
  update_dynamics(updated, m, p.tmpl, p.d);
  const SConstraintBlock rebuilt = build_S_block(m, p.tmpl, p.d);
  CHECK(updated.rows() == rebuilt.rows());
  CHECK((updated.Gy - rebuilt.Gy).norm() == 0.0);
  CHECK((updated.Gu - rebuilt.Gu).norm() == 0.0);
  CHECK((updated.Gp - rebuilt.Gp).norm() == 0.0);
  CHECK((updated.rhs - rebuilt.rhs).norm() == 0.0);
}
