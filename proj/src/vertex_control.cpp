#include "cctmpc/vertex_control.hpp"

#include <algorithm>
#include <sstream>

#include "cctmpc/error.hpp"

namespace cctmpc {

InterpolationWeights interpolation_weights(const Vector& x, const Vector& y0, const TemplateConfig& tmpl,
                                           const QPSettings& settings) {
  const int v = tmpl.num_vertices(), n = tmpl.state_dim();
  if (x.size() != n || y0.size() != tmpl.num_facets())
    throw Error(ErrorCode::kDimensionMismatch, "interpolation_weights: x or y0 has the wrong size");
  const double outside = tmpl.polytope(y0).max_violation(x);
  if (outside > 1e-6) {
    std::ostringstream os;
    os << "state lies outside X(y0) by " << outside;
    throw Error(ErrorCode::kInfeasible, os.str());
  }

  // Rows: n reconstruction equalities, one sum row, v sign rows.
  std::vector<Triplet> t;
  for (int j = 0; j < v; ++j) {
    const Vector p = tmpl.vertex(j, y0);
    for (int i = 0; i < n; ++i)
      if (p[i] != 0.0) t.emplace_back(i, j, p[i]);
    t.emplace_back(n, j, 1.0);
    t.emplace_back(n + 1 + j, j, 1.0);
  }
  QuadraticProgram qp;
  qp.hessian = 2.0 * Matrix::Identity(v, v);
  qp.linear_cost = Vector::Zero(v);
  qp.constraint_matrix.resize(n + 1 + v, v);
  qp.constraint_matrix.setFromTriplets(t.begin(), t.end());
  qp.lower_bounds.resize(n + 1 + v);
  qp.upper_bounds.resize(n + 1 + v);
  qp.lower_bounds << x, 1.0, Vector::Zero(v);
  qp.upper_bounds << x, 1.0, Vector::Constant(v, kInfinity);

  const QPResult res = solve_qp(qp, std::nullopt, settings);
  InterpolationWeights w;
  if (res.optimal()) {
    w.lambda = res.primal;
  } else {
    // x on several facets at once makes the active set degenerate; any
    // basic feasible point of the same rows is still a valid weight vector.
    LinearProgram lp{Vector::Zero(v), Matrix(qp.constraint_matrix), qp.lower_bounds, qp.upper_bounds};
    const LPResult fb = solve_lp(lp);
    if (fb.status != LPStatus::kOptimal) {
      if (res.status == QPStatus::kInfeasible) throw Error(ErrorCode::kInfeasible, "no convex weights reproduce x");
      throw Error(ErrorCode::kSolverFailure, std::string("interpolation QP: ") + to_string(res.status));
    }
    w.lambda = fb.primal;
  }
  // Solver-level negatives are clamped and the weights renormalized.
  for (auto& l : w.lambda)
    if (l < 0.0) l = 0.0;
  w.lambda /= w.lambda.sum();
  return w;
}

Vector control_input(const InterpolationWeights& w, const Vector& u0) {
  const int v = static_cast<int>(w.lambda.size());
  if (v == 0 || u0.size() % v != 0) throw Error(ErrorCode::kDimensionMismatch, "control_input: u0 size");
  const int nu = static_cast<int>(u0.size()) / v;
  Vector u = Vector::Zero(nu);
  for (int j = 0; j < v; ++j) u += w.lambda[j] * u0.segment(j * nu, nu);
  return u;
}

double interpolation_residual(const InterpolationWeights& w, const Vector& x, const Vector& y0,
                              const TemplateConfig& tmpl) {
  Vector rec = Vector::Zero(x.size());
  for (int j = 0; j < tmpl.num_vertices(); ++j) rec += w.lambda[j] * tmpl.vertex(j, y0);
  return std::max({-w.lambda.minCoeff(), std::abs(w.lambda.sum() - 1.0), (rec - x).cwiseAbs().maxCoeff()});
}

}  // namespace cctmpc
