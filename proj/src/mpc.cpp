#include "cctmpc/mpc.hpp"

#include <cmath>
#include <sstream>

#include "cctmpc/error.hpp"

namespace cctmpc {

namespace {

double min_eigenvalue(const Matrix& a) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (a + a.transpose())).eigenvalues().minCoeff();
}

void add_dense(std::vector<Triplet>& t, int row, int col, const Matrix& block, double scale = 1.0) {
  for (Eigen::Index j = 0; j < block.cols(); ++j)
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      if (block(i, j) != 0.0) t.emplace_back(row + i, col + j, scale * block(i, j));
}

Matrix blkdiag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace

ConfigReport validate_config(const MPCConfig& cfg, int dim) {
  ConfigReport r;
  auto fail = [&](const std::string& msg, double eig) {
    r.ok = false;
    r.message = msg;
    r.worst_eigenvalue = eig;
    return r;
  };
  if (cfg.N < 1) return fail("horizon N must be >= 1", 0.0);
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) return fail("gamma out of range [0, 1)", 0.0);
  if (cfg.Q.rows() != dim || cfg.Q.cols() != dim || cfg.P.rows() != dim || cfg.P.cols() != dim)
    return fail("Q and P must be " + std::to_string(dim) + "x" + std::to_string(dim), 0.0);
  const double lq = min_eigenvalue(cfg.Q);
  if (!(lq > 0.0)) return fail("Q is not positive definite (min eigenvalue " + std::to_string(lq) + ")", lq);
  const double lp = min_eigenvalue(cfg.P);
  if (!(lp > 0.0)) return fail("P is not positive definite (min eigenvalue " + std::to_string(lp) + ")", lp);
  const double lt = min_eigenvalue(cfg.P - cfg.Q - cfg.gamma * cfg.gamma * cfg.P);
  r.worst_eigenvalue = lt;
  if (lt < -1e-9) {
    std::ostringstream os;
    os << "Q + gamma^2 P <= P fails (min eigenvalue of P - Q - gamma^2 P is " << lt << ")";
    return fail(os.str(), lt);
  }
  return r;
}

Matrix vertex_spread_weight(const TubeProblem& p, double reg) {
  const int v = p.v(), nu = p.nu();
  Matrix ubar = Matrix::Zero(nu, v * nu);
  for (int j = 0; j < v; ++j) ubar += input_selector(j, v, nu);
  ubar /= static_cast<double>(v);
  Matrix q = reg * Matrix::Identity(p.m() + p.vu(), p.m() + p.vu());
  for (int k = 0; k < v; ++k) {
    const Matrix vk = blkdiag(p.tmpl.mean_vertex_map - p.tmpl.vertex_maps[k], ubar - input_selector(k, v, nu));
    q += vk.transpose() * p.weights.Qv * vk;
  }
  return 0.5 * (q + q.transpose());
}

Matrix diagonal_weight(const TubeProblem& p, double wy, double wu) {
  Matrix q = Matrix::Zero(p.m() + p.vu(), p.m() + p.vu());
  q.diagonal().head(p.m()).setConstant(wy);
  q.diagonal().tail(p.vu()).setConstant(wu);
  return q;
}

Matrix terminal_weight(const Matrix& Q, double gamma) { return Q / (1.0 - gamma * gamma); }

// ---------------------------------------------------------------------------

TrackingMPC::TrackingMPC(TubeProblem problem, MPCConfig config, QPSettings settings)
    : problem_(std::move(problem)), config_(std::move(config)), settings_(settings) {
  const ConfigReport rep = validate_config(config_, problem_.m() + problem_.vu());
  if (!rep.ok) throw Error(ErrorCode::kInvalidArgument, rep.message);
  layout_ = {config_.N, problem_.m(), problem_.vu(), problem_.ell.ntheta};
}

void TrackingMPC::update_vertex_pairs(const std::vector<std::pair<Matrix, Matrix>>& pairs) {
  problem_.update_vertex_pairs(pairs);
  layout_.ntheta = problem_.ell.ntheta;
}

QuadraticProgram TrackingMPC::build_qp(const Vector& x, const Vector& r, ConeForm form) const {
  const auto& L = layout_;
  const int m = L.m, vu = L.vu, N = L.N, nv = L.num_variables();
  if (x.size() != problem_.model.state_dim()) throw Error(ErrorCode::kDimensionMismatch, "state dimension");
  if (r.size() != problem_.model.output_dim()) throw Error(ErrorCode::kDimensionMismatch, "reference dimension");

  const SConstraintBlock complete =
      form == ConeForm::kComplete ? build_S_block(problem_.model, problem_.tmpl, problem_.d, ConeForm::kComplete)
                                  : SConstraintBlock{};
  const SConstraintBlock& S = form == ConeForm::kComplete ? complete : problem_.S;
  const int s = S.rows();
  const int rows = m + (N + 2) * s;

  QuadraticProgram qp;
  qp.lower_bounds = Vector::Constant(rows, -kInfinity);
  qp.upper_bounds = Vector::Constant(rows, kInfinity);
  std::vector<Triplet> t;

  // F x <= y_0.
  for (int i = 0; i < m; ++i) t.emplace_back(i, L.y(0) + i, 1.0);
  qp.lower_bounds.head(m) = problem_.tmpl.F * x;

  int row = m;
  for (int k = 0; k < N; ++k, row += s) {
    add_dense(t, row, L.y(k), S.Gy);
    add_dense(t, row, L.u(k), S.Gu);
    add_dense(t, row, L.y(k + 1), S.Gp);
    qp.upper_bounds.segment(row, s) = S.rhs;
  }
  const double g = config_.gamma;
  add_dense(t, row, L.y(N), S.Gy + g * S.Gp);
  add_dense(t, row, L.u(N), S.Gu);
  add_dense(t, row, L.ys(), S.Gp, 1.0 - g);
  qp.upper_bounds.segment(row, s) = S.rhs;
  row += s;
  add_dense(t, row, L.ys(), S.Gy + S.Gp);
  add_dense(t, row, L.us(), S.Gu);
  qp.upper_bounds.segment(row, s) = S.rhs;

  qp.constraint_matrix.resize(rows, nv);
  qp.constraint_matrix.setFromTriplets(t.begin(), t.end());
  qp.constraint_matrix.makeCompressed();

  // Stage terms |z_k - z_s|_W^2, z = (y, u).
  qp.hessian = Matrix::Zero(nv, nv);
  auto zidx = [&](int k, int a) { return a < m ? L.y(k) + a : L.u(k) + a - m; };
  for (int k = 0; k <= N; ++k) {
    const Matrix& w = k < N ? config_.Q : config_.P;
    for (int a = 0; a < m + vu; ++a)
      for (int b = 0; b < m + vu; ++b) {
        const double c = 2.0 * w(a, b);
        if (c == 0.0) continue;
        qp.hessian(zidx(k, a), zidx(k, b)) += c;
        qp.hessian(zidx(k, a), L.ys() + b) -= c;
        qp.hessian(L.ys() + a, zidx(k, b)) -= c;
        qp.hessian(L.ys() + a, L.ys() + b) += c;
      }
  }
  const int ne = problem_.ell.dim();
  qp.hessian.block(L.ys(), L.ys(), ne, ne) += problem_.ell.H;
  qp.linear_cost = Vector::Zero(nv);
  qp.linear_cost.segment(L.ys(), ne) = problem_.ell.G * r;
  return qp;
}

SizeReport TrackingMPC::size_report() const {
  const auto& L = layout_;
  const auto& model = problem_.model;
  const int m = L.m, v = problem_.v(), p = model.num_vertices();
  const int nxr = model.state_set.num_facets(), nur = model.input_set.num_facets();
  const SConstraintBlock complete = build_S_block(model, problem_.tmpl, problem_.d, ConeForm::kComplete);
  SizeReport r;
  r.steady_rows = complete.rows();
  r.total_rows = m + (L.N + 2) * complete.rows();
  r.rows_before_steady = r.total_rows - r.steady_rows;
  r.formula_rows = (L.N + 1) * v * (m * (1 + p) + nxr + nur) + m;
  r.trajectory_variables = L.trajectory_variables();
  r.formula_variables = (L.N + 1) * (m + v * model.input_dim());
  r.extra_variables = L.num_variables() - L.trajectory_variables();
  return r;
}

MPCSolution TrackingMPC::unpack(const Vector& z) const {
  const auto& L = layout_;
  MPCSolution s;
  for (int k = 0; k <= L.N; ++k) {
    s.y.push_back(z.segment(L.y(k), L.m));
    s.u.push_back(z.segment(L.u(k), L.vu));
  }
  s.ys = z.segment(L.ys(), L.m);
  s.us = z.segment(L.us(), L.vu);
  s.theta = z.segment(L.theta(), L.ntheta);
  s.primal = z;
  return s;
}

Vector TrackingMPC::pack(const MPCSolution& s) const {
  const auto& L = layout_;
  Vector z(L.num_variables());
  for (int k = 0; k <= L.N; ++k) {
    z.segment(L.y(k), L.m) = s.y[k];
    z.segment(L.u(k), L.vu) = s.u[k];
  }
  z.segment(L.ys(), L.m) = s.ys;
  z.segment(L.us(), L.vu) = s.us;
  z.segment(L.theta(), L.ntheta) = s.theta;
  return z;
}

double TrackingMPC::objective(const MPCSolution& s, const Vector& r) const {
  const QuadraticProgram qp = build_qp(Vector::Zero(problem_.model.state_dim()), r);
  return qp.objective(pack(s)) + 0.5 * r.dot(problem_.ell.R * r);
}

MPCSolution TrackingMPC::solve(const Vector& x, const Vector& r, const std::optional<MPCSolution>& warm) const {
  const QuadraticProgram qp = build_qp(x, r);
  std::optional<WarmStart> ws;
  if (warm && !warm->y.empty()) ws = WarmStart{pack(*warm), warm->dual};
  const QPResult res = solve_qp(qp, ws, settings_);
  MPCSolution s;
  if (res.optimal()) {
    s = unpack(res.primal);
    s.dual = res.dual;
    s.objective = res.objective + 0.5 * r.dot(problem_.ell.R * r);
  }
  s.status = res.status;
  s.iterations = res.iterations;
  return s;
}

MPCSolution TrackingMPC::shifted_candidate(const MPCSolution& prev) const {
  const int N = layout_.N;
  const double g = config_.gamma;
  MPCSolution c;
  for (int k = 1; k <= N; ++k) {
    c.y.push_back(prev.y[k]);
    c.u.push_back(prev.u[k]);
  }
  c.y.push_back(g * prev.y[N] + (1.0 - g) * prev.ys);
  c.u.push_back(g * prev.u[N] + (1.0 - g) * prev.us);
  c.ys = prev.ys;
  c.us = prev.us;
  c.theta = prev.theta;
  c.status = prev.status;
  c.primal = pack(c);
  // Multipliers move one stage block earlier; the initial-condition rows are
  // left to the solver.
  const int m = layout_.m, s = problem_.S.rows();
  if (prev.dual.size() == m + (N + 2) * s) {
    c.dual = Vector::Zero(prev.dual.size());
    for (int k = 0; k + 1 < N; ++k) c.dual.segment(m + k * s, s) = prev.dual.segment(m + (k + 1) * s, s);
    c.dual.segment(m + (N - 1) * s, s) = prev.dual.segment(m + N * s, s);
    c.dual.tail(2 * s) = prev.dual.tail(2 * s);
  }
  return c;
}

SolutionCheck TrackingMPC::check_solution(const MPCSolution& s, const Vector& x, double tol) const {
  SolutionCheck out;
  auto note = [&](double worst, const std::string& where) {
    if (worst > out.worst) {
      out.worst = worst;
      out.where = where;
    }
  };
  note((problem_.tmpl.F * x - s.y[0]).maxCoeff(), "initial");
  const int N = layout_.N;
  for (int k = 0; k < N; ++k) {
    const SCheck c = check_S(problem_.S, {s.y[k], s.u[k], s.y[k + 1]}, tol);
    note(c.worst, "step " + std::to_string(k) + " " + to_string(c.group));
  }
  const SCheck term =
      check_S(problem_.S, {s.y[N], s.u[N], config_.gamma * s.y[N] + (1.0 - config_.gamma) * s.ys}, tol);
  note(term.worst, std::string("terminal ") + to_string(term.group));
  const SCheck st = check_S(problem_.S, {s.ys, s.us, s.ys}, tol);
  note(st.worst, std::string("steady ") + to_string(st.group));
  out.ok = out.worst <= tol;
  return out;
}

double TrackingMPC::stage_cost(const Vector& y, const Vector& u, const Vector& ys, const Vector& us,
                               const Matrix& w) const {
  Vector e(y.size() + u.size());
  e << y - ys, u - us;
  return e.dot(w * e);
}

double TrackingMPC::min_over_inputs(const Vector& y, const Vector& y_plus, const Vector& ys, const Vector& us,
                                    const Matrix& w) const {
  const int m = layout_.m, vu = layout_.vu;
  const Matrix wuu = w.bottomRightCorner(vu, vu);
  const Matrix wuy = w.bottomLeftCorner(vu, m);
  const Vector ey = y - ys;
  QuadraticProgram qp;
  qp.hessian = 2.0 * wuu;
  qp.linear_cost = 2.0 * (wuy * ey - wuu * us);
  const auto& S = problem_.S;
  qp.constraint_matrix = S.Gu.sparseView();
  qp.lower_bounds = Vector::Constant(S.rows(), -kInfinity);
  qp.upper_bounds = S.rhs - S.Gy * y - S.Gp * y_plus;
  const QPResult res = solve_qp(qp, std::nullopt, settings_);
  if (res.status == QPStatus::kInfeasible) return kInfinity;
  if (!res.optimal()) throw Error(ErrorCode::kSolverFailure, std::string("input QP: ") + to_string(res.status));
  return stage_cost(y, res.primal, ys, us, w);
}

double TrackingMPC::cost_to_travel(const Vector& y, const Vector& y_plus, const Vector& ys, const Vector& us) const {
  return min_over_inputs(y, y_plus, ys, us, config_.Q);
}

double TrackingMPC::terminal_cost(const Vector& y, const Vector& ys, const Vector& us) const {
  const double g = config_.gamma;
  return min_over_inputs(y, g * y + (1.0 - g) * ys, ys, us, config_.P);
}

double TrackingMPC::lyapunov_value(const Vector& x, const Vector& r) const {
  const MPCSolution s = solve(x, r);
  if (!s.feasible()) throw Error(ErrorCode::kInfeasible, "MPC problem infeasible at this state");
  return s.objective - solve_optimal_rci(problem_, r, settings_).cost;
}

}  // namespace cctmpc
