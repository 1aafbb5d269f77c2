#include <doctest.h>

#include <cmath>

#include "cctmpc/error.hpp"
#include "cctmpc/model.hpp"

using namespace cctmpc;

namespace {

UncertainModel scalar_pair(const Matrix& a, const Matrix& b) {
  UncertainModel m;
  m.A = {a};
  m.B = {b};
  m.C = Matrix::Identity(1, a.rows());
  m.D = Matrix::Zero(1, b.cols());
  m.state_set = HPolytope::symmetric_box(Vector::Ones(a.rows()));
  m.input_set = HPolytope::symmetric_box(Vector::Ones(b.cols()));
  m.disturbance_set = HPolytope::symmetric_box(Vector::Zero(a.rows()));
  return m;
}

LPVScheduler lane_change_scheduler() {
  LPVScheduler s;
  s.A0 = Matrix::Identity(2, 2);
  s.A1 = Matrix::Zero(2, 2);
  s.A1(0, 1) = 0.1;
  s.A2 = Matrix::Zero(2, 2);
  s.A2(1, 1) = -0.5;
  s.B = Matrix::Ones(2, 1);
  s.initial_range = {40.0 / 3.6, 65.0 / 3.6};
  s.initial_hull = {vec({11.111, 0.090}), vec({18.056, 0.055}), vec({11.111, 0.086}), vec({17.217, 0.055})};
  return s;
}

}  // namespace

TEST_CASE("steady-state basis") {
  SUBCASE("zero dynamics with identity input") {
    const auto b = steady_state_basis(scalar_pair(Matrix::Zero(2, 2), Matrix::Identity(2, 2)));
    Matrix g(2, 4);
    g << -Matrix::Identity(2, 2), Matrix::Identity(2, 2);
    CHECK((g * b.M).norm() <= 1e-12);
    CHECK((b.M.transpose() * b.M - Matrix::Identity(2, 2)).norm() <= 1e-12);
    // Kernel is {x = u}.
    CHECK((b.M.topRows(2) - b.M.bottomRows(2)).norm() <= 1e-12);
  }
  SUBCASE("illustrative system") {
    Matrix a(2, 2), bb(2, 1);
    a << 1.1, 1, 0, 1;
    bb << 0.5, 1;
    const auto b = steady_state_basis(scalar_pair(a, bb));
    Matrix g(2, 3);
    g << 0.1, 1, 0.5, 0, 0, 1;
    CHECK((g * b.M).norm() <= 1e-12);
    CHECK(b.M.norm() == doctest::Approx(1.0));
    // Independent kernel: u = 0, x2 = -0.1 x1.
    Vector k = vec({1.0, -0.1, 0.0});
    k.normalize();
    CHECK(std::abs(std::abs(k.dot(b.M.col(0))) - 1.0) <= 1e-12);
  }
  SUBCASE("integrator forces zero input") {
    const auto b = steady_state_basis(scalar_pair(Matrix::Identity(1, 1), Matrix::Identity(1, 1)));
    CHECK(std::abs(b.M(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(b.M(1, 0)) <= 1e-12);
  }
  SUBCASE("rank deficient") {
    try {
      steady_state_basis(scalar_pair(Matrix::Identity(2, 2), Matrix::Zero(2, 1)));
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kRankDeficient);
    }
  }
}

TEST_CASE("disturbance bound") {
  Matrix f(3, 2);
  f << 1, 0, 0.6, 0.8, -0.3, -2.0;
  const TemplateConfig t = make_template(f, Matrix(0, 3), {Matrix::Zero(2, 3)});

  UncertainModel m = scalar_pair(Matrix::Identity(2, 2), Matrix::Zero(2, 1));
  CHECK(disturbance_bound(m, t).norm() == 0.0);

  m.disturbance_set = HPolytope::symmetric_box(vec({0.0, 0.5}));
  const Vector d = disturbance_bound(m, t);
  for (int i = 0; i < 3; ++i) CHECK(d[i] == doctest::Approx(0.5 * std::abs(f(i, 1))));

  // Interval [0, 100] entering through B_w.
  m.disturbance_set = HPolytope::box(Vector::Zero(1), Vector::Constant(1, 100.0));
  m.disturbance_input = Matrix(2, 1);
  m.disturbance_input << 0.01, -0.02;
  const Vector d2 = disturbance_bound(m, t);
  for (int i = 0; i < 3; ++i)
    CHECK(d2[i] == doctest::Approx(std::max(0.0, 100.0 * f.row(i).dot(m.disturbance_input.col(0)))));
}

TEST_CASE("model validation") {
  UncertainModel m = scalar_pair(Matrix::Identity(2, 2), Matrix::Zero(2, 1));
  CHECK_NOTHROW(m.validate());
  m.B.push_back(Matrix::Zero(2, 1));
  CHECK_THROWS_AS(m.validate(), Error);
  m.B.pop_back();
  m.disturbance_set.normals = Matrix(1, 2);
  m.disturbance_set.normals << 1, 0;
  m.disturbance_set.offsets = Vector::Ones(1);
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("LPV restriction") {
  const LPVScheduler s = lane_change_scheduler();
  const auto full = restrict_uncertainty(s, s.initial_range);
  CHECK(full.size() == 4);
  CHECK(full[1].first(0, 1) == doctest::Approx(0.1 * 18.056));
  CHECK(full[1].first(1, 1) == doctest::Approx(1.0 - 0.5 * 0.055));

  const double v = 15.0;
  const auto point = restrict_uncertainty(s, {v, v});
  CHECK(point.size() == 1);
  CHECK((point[0].first - s.A_at(v)).norm() <= 1e-12);

  try {
    restrict_uncertainty(s, {10.0, s.initial_range.hi});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kRangeNotNested);
  }

  // Monotone shrinkage along a non-decreasing schedule.
  auto prev = full;
  for (double lo = s.initial_range.lo; lo <= s.initial_range.hi; lo += 0.5) {
    const auto next = restrict_uncertainty(s, {lo, s.initial_range.hi});
    CHECK(vertex_hull_nested(next, prev));
    CHECK(vertex_hull_nested(next, full));
    prev = next;
  }
  CHECK_FALSE(vertex_hull_nested(full, restrict_uncertainty(s, {15.0, s.initial_range.hi})));
}

TEST_CASE("mean pair lies in the vertex hull") {
  const LPVScheduler s = lane_change_scheduler();
  UncertainModel m = scalar_pair(Matrix::Identity(2, 2), Matrix::Zero(2, 1));
  const auto pairs = restrict_uncertainty(s, s.initial_range);
  apply_vertex_pairs(m, pairs);
  CHECK(vertex_hull_nested({{m.mean_A(), m.mean_B()}}, pairs));
}
