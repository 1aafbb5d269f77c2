#pragma once

#include "cctmpc/model.hpp"
#include "cctmpc/polytope.hpp"
#include "cctmpc/qp.hpp"
#include "cctmpc/tube.hpp"

namespace cctmpc {

struct RCICostWeights {
  Matrix Qv;
  Matrix Qc;
  Matrix Qr;
  /// Added to the theta block only; breaks ties among equivalent steady states
  /// when [C D] M has a kernel.
  double theta_regularization = 1e-10;

  /// Throws kInvalidArgument (not PSD, naming the matrix and eigenvalue) or
  /// kDimensionMismatch.
  void validate(int nx, int nu, int nz) const;
};

/// l(y, u, theta, r) = 1/2 w' H w + r' G' w + 1/2 r' R r with w = (y, u, theta),
/// the sum of the vertex-spread and center-tracking terms.
struct EllForm {
  Matrix H;
  Matrix G;
  Matrix R;
  int m = 0;
  int vu = 0;
  int ntheta = 0;

  int dim() const { return m + vu + ntheta; }
  double value(const Vector& y, const Vector& u, const Vector& theta, const Vector& r) const;
  /// Smallest eigenvalue of the Hessian after minimizing out theta.
  double reduced_min_eigenvalue() const;
};

EllForm assemble_ell(const TemplateConfig& tmpl, const SteadyStateBasis& basis, const RCICostWeights& weights,
                     const UncertainModel& model);

/// Everything the optimizers share for one (model, template, weights) triple.
struct TubeProblem {
  UncertainModel model;
  TemplateConfig tmpl;
  Vector d;
  SConstraintBlock S;
  SteadyStateBasis basis;
  RCICostWeights weights;
  EllForm ell;

  static TubeProblem build(UncertainModel model, TemplateConfig tmpl, RCICostWeights weights);

  /// Swaps in new vertex pairs: dynamics rows, steady-state basis and cost
  /// are regenerated, cone/state/input rows are kept.
  void update_vertex_pairs(const std::vector<std::pair<Matrix, Matrix>>& pairs);

  int m() const { return tmpl.num_facets(); }
  int v() const { return tmpl.num_vertices(); }
  int nu() const { return model.input_dim(); }
  int vu() const { return v() * nu(); }
};

struct OptimalRCI {
  Vector y;
  Vector u;
  Vector theta;
  double cost = kInfinity;
};

/// Minimizes l(y, u, r) over (y, u, y) in S. Throws kInfeasible when no RCI
/// parameter exists and kSolverFailure on solver breakdown.
OptimalRCI solve_optimal_rci(const TubeProblem& problem, const Vector& r, const QPSettings& settings = {});

struct MRCILimits {
  int max_iterations = 300;
  int max_facets = 400;
  double tolerance = 1e-4;
};

struct MRCIResult {
  HPolytope set;
  int iterations = 0;
  bool converged = false;
  double last_step = kInfinity;
  /// Every vertex admits an input keeping all successors inside (LP check).
  bool certified = false;
  double certificate_margin = kInfinity;
};

/// Outer fixed-point iteration Omega_{k+1} = {x in Omega_k : exists u in U,
/// A_i x + B_i u + w in Omega_k for all i and all disturbance vertices},
/// started from the state set. Requires n_x + n_u <= 4.
MRCIResult approximate_maximal_rci(const UncertainModel& model, const MRCILimits& limits = {});

/// One-step robust predecessor of omega intersected with omega.
HPolytope robust_predecessor(const UncertainModel& model, const HPolytope& omega);

}  // namespace cctmpc
