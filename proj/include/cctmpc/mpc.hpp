#pragma once

#include <optional>
#include <string>

#include "cctmpc/qp.hpp"
#include "cctmpc/rci.hpp"

namespace cctmpc {

struct MPCConfig {
  int N = 1;
  double gamma = 0.0;
  /// Weights on (y - y_s, u - u_s), size m + v*n_u.
  Matrix Q;
  Matrix P;
};

struct ConfigReport {
  bool ok = true;
  std::string message;
  /// Worst eigenvalue of the failing condition (or of P - Q - gamma^2 P when ok).
  double worst_eigenvalue = 0.0;
};

/// Checks N >= 1, gamma in [0, 1), Q > 0, P > 0 and Q + gamma^2 P <= P.
ConfigReport validate_config(const MPCConfig& cfg, int dim);

/// sum_k Vk' Q_v Vk + reg * I with Vk = blkd(Vbar - V_k, Ubar - U_k).
Matrix vertex_spread_weight(const TubeProblem& problem, double reg);

/// blkd(wy * I_m, wu * I_{v n_u}).
Matrix diagonal_weight(const TubeProblem& problem, double wy, double wu);

/// P = Q / (1 - gamma^2), the smallest P meeting the terminal inequality.
Matrix terminal_weight(const Matrix& Q, double gamma);

/// Index layout of the decision vector (y_0..y_N, u_0..u_N, y_s, u_s, theta).
struct MPCLayout {
  int N = 0;
  int m = 0;
  int vu = 0;
  int ntheta = 0;

  int y(int k) const { return k * m; }
  int u(int k) const { return (N + 1) * m + k * vu; }
  int ys() const { return (N + 1) * (m + vu); }
  int us() const { return ys() + m; }
  int theta() const { return us() + vu; }
  int num_variables() const { return theta() + ntheta; }
  int trajectory_variables() const { return (N + 1) * (m + vu); }
};

/// Problem-size accounting for the self-check against the closed-form count.
struct SizeReport {
  int rows_before_steady = 0;
  int formula_rows = 0;
  int trajectory_variables = 0;
  int formula_variables = 0;
  int extra_variables = 0;
  int steady_rows = 0;
  int total_rows = 0;
  bool matches() const { return rows_before_steady == formula_rows && trajectory_variables == formula_variables; }
};

struct MPCSolution {
  std::vector<Vector> y;
  std::vector<Vector> u;
  Vector ys;
  Vector us;
  Vector theta;
  double objective = kInfinity;
  QPStatus status = QPStatus::kNumericalError;
  int iterations = 0;
  /// Raw QP iterate and multipliers, reused for warm starts.
  Vector primal;
  Vector dual;

  bool feasible() const { return status == QPStatus::kOptimal; }
};

struct SolutionCheck {
  bool ok = true;
  double worst = -kInfinity;
  std::string where;
};

class TrackingMPC {
 public:
  TrackingMPC(TubeProblem problem, MPCConfig config, QPSettings settings = {});

  const TubeProblem& problem() const { return problem_; }
  const MPCConfig& config() const { return config_; }
  const MPCLayout& layout() const { return layout_; }
  const QPSettings& settings() const { return settings_; }

  /// The QP for state x and reference r. form = kComplete gives the
  /// un-reduced configuration rows used by the size self-check.
  QuadraticProgram build_qp(const Vector& x, const Vector& r, ConeForm form = ConeForm::kReduced) const;
  SizeReport size_report() const;

  /// Solves for (x, r). Never throws on infeasibility; see MPCSolution::status.
  MPCSolution solve(const Vector& x, const Vector& r, const std::optional<MPCSolution>& warm = std::nullopt) const;

  /// Shift-by-one candidate with the gamma blend of the terminal and steady
  /// pair appended. Feasible for every successor state and reference.
  MPCSolution shifted_candidate(const MPCSolution& prev) const;

  /// Objective of an arbitrary decision (used to score candidates).
  double objective(const MPCSolution& s, const Vector& r) const;

  /// Checks the solution invariants for state x.
  SolutionCheck check_solution(const MPCSolution& s, const Vector& x, double tol) const;

  /// min_u |(y - y_s, u - u_s)|_Q^2 s.t. (y, u, y+) in S; +inf if infeasible.
  double cost_to_travel(const Vector& y, const Vector& y_plus, const Vector& ys, const Vector& us) const;

  /// min_u |(y - y_s, u - u_s)|_P^2 s.t. (y, u, gamma y + (1 - gamma) y_s) in S;
  /// +inf if infeasible.
  double terminal_cost(const Vector& y, const Vector& ys, const Vector& us) const;

  /// C*(x, r) - C_o(r). Throws kInfeasible when either problem is infeasible.
  double lyapunov_value(const Vector& x, const Vector& r) const;

  /// LPV update: swaps the vertex pairs of the underlying problem.
  void update_vertex_pairs(const std::vector<std::pair<Matrix, Matrix>>& pairs);

  MPCSolution unpack(const Vector& primal) const;
  Vector pack(const MPCSolution& s) const;

 private:
  double stage_cost(const Vector& y, const Vector& u, const Vector& ys, const Vector& us, const Matrix& w) const;
  double min_over_inputs(const Vector& y, const Vector& y_plus, const Vector& ys, const Vector& us,
                         const Matrix& w) const;

  TubeProblem problem_;
  MPCConfig config_;
  QPSettings settings_;
  MPCLayout layout_;
};

}  // namespace cctmpc
