#pragma once

/**
 * @file
 * @brief Convex quadratic and linear program interface.
 *
 * Every optimization problem in the library is stated in the single form
 *
 *     min  1/2 x' H x + g' x   s.t.   l <= A x <= u,
 *
 * with equality rows encoded as l == u and one-sided rows using +/- infinity.
 * Quadratic programs are solved with a dual active-set method (Goldfarb-Idnani)
 * wrapped in proximal-point outer iterations when H is only semidefinite.
 * Linear programs go through a dense two-phase simplex.
 */

#include <optional>
#include <string>

#include "cctmpc/types.hpp"

namespace cctmpc {

struct QuadraticProgram {
  Matrix hessian;
  Vector linear_cost;
  SparseMatrix constraint_matrix;
  Vector lower_bounds;
  Vector upper_bounds;

  int num_variables() const { return static_cast<int>(linear_cost.size()); }
  int num_constraints() const { return static_cast<int>(constraint_matrix.rows()); }

  /// Throws Error(kDimensionMismatch / kInvalidArgument) when the type invariants fail.
  void validate() const;

  double objective(const Vector& x) const { return 0.5 * x.dot(hessian * x) + linear_cost.dot(x); }
};

enum class QPStatus { kOptimal, kInfeasible, kMaxIterations, kNumericalError };

const char* to_string(QPStatus status);

struct QPResult {
  QPStatus status = QPStatus::kNumericalError;
  /// Present (non-empty) only when status == kOptimal.
  Vector primal;
  /// Multipliers with the convention H x + g + A' y = 0; y_i > 0 on active upper
  /// bounds and y_i < 0 on active lower bounds.
  Vector dual;
  double objective = kInfinity;
  int iterations = 0;

  bool optimal() const { return status == QPStatus::kOptimal; }
};

struct QPSettings {
  double feasibility_tolerance = 1e-7;
  double duality_gap_tolerance = 1e-7;
  /// Normalized violation below which an inactive row is not added.
  double activation_tolerance = 1e-11;
  int max_iterations = 50000;
  int max_proximal_iterations = 400;
  /// Relative proximal weight used when the Hessian is singular.
  double proximal_weight = 1e-6;
};

struct WarmStart {
  Vector primal;
  Vector dual;
};

/// Solves a convex QP. Never throws on infeasibility or breakdown; those are
/// reported through QPResult::status. Throws Error only for malformed input.
QPResult solve_qp(const QuadraticProgram& qp, const std::optional<WarmStart>& warm_start = std::nullopt,
                  const QPSettings& settings = {});

/// Largest absolute KKT stationarity residual |H x + g + A' y|.
double stationarity_residual(const QuadraticProgram& qp, const Vector& primal, const Vector& dual);

/// Largest bound violation of A x against [l, u].
double constraint_violation(const QuadraticProgram& qp, const Vector& primal);

// ---------------------------------------------------------------------------

/// min c'x  s.t.  l <= A x <= u, x free.
struct LinearProgram {
  Vector cost;
  Matrix constraint_matrix;
  Vector lower_bounds;
  Vector upper_bounds;
};

enum class LPStatus { kOptimal, kInfeasible, kUnbounded };

const char* to_string(LPStatus status);

struct LPResult {
  LPStatus status = LPStatus::kInfeasible;
  Vector primal;
  double objective = kInfinity;
};

LPResult solve_lp(const LinearProgram& lp);

}  // namespace cctmpc
