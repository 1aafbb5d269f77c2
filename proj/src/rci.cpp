#include "cctmpc/rci.hpp"

#include <algorithm>

#include "cctmpc/error.hpp"

namespace cctmpc {

namespace {

void check_psd(const Matrix& q, int dim, const char* name) {
  if (q.rows() != dim || q.cols() != dim)
    throw Error(ErrorCode::kDimensionMismatch, std::string(name) + " must be " + std::to_string(dim) + "x" +
                                                   std::to_string(dim));
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " is not symmetric");
  const double lmin = Eigen::SelfAdjointEigenSolver<Matrix>(q).eigenvalues().minCoeff();
  if (lmin < -1e-10)
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " is not positive semidefinite (min eigenvalue " + std::to_string(lmin) + ")");
}

Matrix blkdiag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace

void RCICostWeights::validate(int nx, int nu, int nz) const {
  check_psd(Qv, nx + nu, "Q_v");
  check_psd(Qc, nx + nu, "Q_c");
  check_psd(Qr, nz, "Q_r");
  if (!(theta_regularization >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "theta regularization must be >= 0");
}

double EllForm::value(const Vector& y, const Vector& u, const Vector& theta, const Vector& r) const {
  Vector w(dim());
  w << y, u, theta;
  return 0.5 * w.dot(H * w) + r.dot(G.transpose() * w) + 0.5 * r.dot(R * r);
}

double EllForm::reduced_min_eigenvalue() const {
  const int nz = m + vu;
  const Matrix hzz = H.topLeftCorner(nz, nz);
  const Matrix hzt = H.topRightCorner(nz, ntheta);
  const Matrix htt = H.bottomRightCorner(ntheta, ntheta);
  const Matrix reduced = hzz - hzt * htt.completeOrthogonalDecomposition().pseudoInverse() * hzt.transpose();
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (reduced + reduced.transpose())).eigenvalues().minCoeff();
}

EllForm assemble_ell(const TemplateConfig& tmpl, const SteadyStateBasis& basis, const RCICostWeights& weights,
                     const UncertainModel& model) {
  const int nx = model.state_dim(), nu = model.input_dim(), nz = model.output_dim();
  const int m = tmpl.num_facets(), v = tmpl.num_vertices();
  weights.validate(nx, nu, nz);
  if (tmpl.state_dim() != nx || basis.M.rows() != nx + nu)
    throw Error(ErrorCode::kDimensionMismatch, "template, basis and model disagree on dimensions");

  Matrix ubar = Matrix::Zero(nu, v * nu);
  for (int j = 0; j < v; ++j) ubar += input_selector(j, v, nu);
  ubar /= static_cast<double>(v);
  const Matrix k = blkdiag(tmpl.mean_vertex_map, ubar);

  Matrix spread = Matrix::Zero(m + v * nu, m + v * nu);
  for (int j = 0; j < v; ++j) {
    const Matrix lj = k - blkdiag(tmpl.vertex_maps[j], input_selector(j, v, nu));
    spread += lj.transpose() * weights.Qv * lj;
  }
  Matrix cd(nz, nx + nu);
  cd << model.C, model.D;
  const Matrix& M = basis.M;
  const Matrix n = cd * M;

  EllForm e;
  e.m = m;
  e.vu = v * nu;
  e.ntheta = basis.dim();
  const int nw = e.dim();
  e.H = Matrix::Zero(nw, nw);
  e.H.topLeftCorner(m + e.vu, m + e.vu) = 2.0 * (spread + k.transpose() * weights.Qc * k);
  e.H.topRightCorner(m + e.vu, e.ntheta) = -2.0 * k.transpose() * weights.Qc * M;
  e.H.bottomLeftCorner(e.ntheta, m + e.vu) = e.H.topRightCorner(m + e.vu, e.ntheta).transpose();
  e.H.bottomRightCorner(e.ntheta, e.ntheta) =
      2.0 * (M.transpose() * weights.Qc * M + n.transpose() * weights.Qr * n) +
      2.0 * weights.theta_regularization * Matrix::Identity(e.ntheta, e.ntheta);
  e.H = 0.5 * (e.H + e.H.transpose());
  e.G = Matrix::Zero(nw, nz);
  e.G.bottomRows(e.ntheta) = -2.0 * n.transpose() * weights.Qr;
  e.R = 2.0 * weights.Qr;
  return e;
}

TubeProblem TubeProblem::build(UncertainModel model, TemplateConfig tmpl, RCICostWeights weights) {
  model.validate();
  TubeProblem p;
  p.d = disturbance_bound(model, tmpl);
  p.S = build_S_block(model, tmpl, p.d);
  p.basis = steady_state_basis(model);
  p.ell = assemble_ell(tmpl, p.basis, weights, model);
  p.model = std::move(model);
  p.tmpl = std::move(tmpl);
  p.weights = std::move(weights);
  return p;
}

void TubeProblem::update_vertex_pairs(const std::vector<std::pair<Matrix, Matrix>>& pairs) {
  apply_vertex_pairs(model, pairs);
  model.validate();
  update_dynamics(S, model, tmpl, d);
  basis = steady_state_basis(model);
  ell = assemble_ell(tmpl, basis, weights, model);
}

OptimalRCI solve_optimal_rci(const TubeProblem& p, const Vector& r, const QPSettings& settings) {
  if (r.size() != p.model.output_dim()) throw Error(ErrorCode::kDimensionMismatch, "reference must have n_z entries");
  const int m = p.m(), vu = p.vu(), nt = p.ell.ntheta;
  QuadraticProgram qp;
  qp.hessian = p.ell.H;
  qp.linear_cost = p.ell.G * r;
  Matrix a = Matrix::Zero(p.S.rows(), m + vu + nt);
  a.leftCols(m) = p.S.Gy + p.S.Gp;
  a.middleCols(m, vu) = p.S.Gu;
  qp.constraint_matrix = a.sparseView();
  qp.lower_bounds = Vector::Constant(p.S.rows(), -kInfinity);
  qp.upper_bounds = p.S.rhs;
  const QPResult res = solve_qp(qp, std::nullopt, settings);
  if (res.status == QPStatus::kInfeasible)
    throw Error(ErrorCode::kInfeasible, "no RCI parameter exists for this template and model");
  if (!res.optimal()) throw Error(ErrorCode::kSolverFailure, std::string("RCI QP: ") + to_string(res.status));
  OptimalRCI out;
  out.y = res.primal.head(m);
  out.u = res.primal.segment(m, vu);
  out.theta = res.primal.tail(nt);
  out.cost = res.objective + 0.5 * r.dot(p.ell.R * r);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Row-wise worst disturbance max_w H_k w over the disturbance vertices.
Vector disturbance_shift(const Matrix& h, const std::vector<Vector>& ws) {
  Vector out = Vector::Constant(h.rows(), -kInfinity);
  for (const auto& w : ws) out = out.cwiseMax(h * w);
  return out;
}

}  // namespace

HPolytope robust_predecessor(const UncertainModel& model, const HPolytope& omega) {
  const int n = model.state_dim(), nu = model.input_dim();
  if (n + nu > kMaxEnumerationDim) throw Error(ErrorCode::kDimensionTooLarge, "MRCI needs n_x + n_u <= 4");
  const int k = omega.num_facets(), ku = model.input_set.num_facets();
  const Vector dh = disturbance_shift(omega.normals, model.disturbance_vertices());
  const int p = model.num_vertices();
  HPolytope lifted;
  lifted.normals = Matrix::Zero(k + ku + p * k, n + nu);
  lifted.offsets = Vector::Zero(k + ku + p * k);
  lifted.normals.topLeftCorner(k, n) = omega.normals;
  lifted.offsets.head(k) = omega.offsets;
  lifted.normals.block(k, n, ku, nu) = model.input_set.normals;
  lifted.offsets.segment(k, ku) = model.input_set.offsets;
  for (int i = 0; i < p; ++i) {
    const int r = k + ku + i * k;
    lifted.normals.block(r, 0, k, n) = omega.normals * model.A[i];
    lifted.normals.block(r, n, k, nu) = omega.normals * model.B[i];
    lifted.offsets.segment(r, k) = omega.offsets - dh;
  }
  std::vector<Vector> pts;
  for (const auto& z : enumerate_vertices(lifted)) pts.push_back(z.head(n));
  return convex_hull(pts);
}

MRCIResult approximate_maximal_rci(const UncertainModel& model, const MRCILimits& limits) {
  model.validate();
  MRCIResult out;
  HPolytope omega = remove_redundant(model.state_set);
  for (int it = 0; it < limits.max_iterations; ++it) {
    HPolytope next;
    try {
      next = robust_predecessor(model, omega);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kEmpty || e.code() == ErrorCode::kInvalidArgument) {
        out.set = omega;
        out.iterations = it;
        throw Error(ErrorCode::kNotConverged, "iterates collapsed (no RCI set) after " + std::to_string(it) +
                                                  " iterations");
      }
      throw;
    }
    out.last_step = hausdorff_distance(next, omega);
    omega = std::move(next);
    out.iterations = it + 1;
    if (out.last_step <= limits.tolerance) {
      out.converged = true;
      break;
    }
    if (omega.num_facets() > limits.max_facets) break;
  }
  out.set = omega;

  // Certificate: each vertex keeps a feasible input with the largest margin.
  const int nu = model.input_dim();
  const Vector dh = disturbance_shift(omega.normals, model.disturbance_vertices());
  const int k = omega.num_facets(), ku = model.input_set.num_facets(), p = model.num_vertices();
  double margin = kInfinity;
  for (const auto& x : enumerate_vertices(omega)) {
    LinearProgram lp;
    lp.cost = Vector::Zero(nu + 1);
    lp.cost[nu] = -1.0;
    lp.constraint_matrix = Matrix::Zero(ku + p * k + 1, nu + 1);
    lp.lower_bounds = Vector::Constant(ku + p * k + 1, -kInfinity);
    lp.upper_bounds.resize(ku + p * k + 1);
    lp.constraint_matrix.topLeftCorner(ku, nu) = model.input_set.normals;
    lp.upper_bounds.head(ku) = model.input_set.offsets;
    for (int i = 0; i < p; ++i) {
      lp.constraint_matrix.block(ku + i * k, 0, k, nu) = omega.normals * model.B[i];
      lp.constraint_matrix.block(ku + i * k, nu, k, 1).setOnes();
      lp.upper_bounds.segment(ku + i * k, k) = omega.offsets - dh - omega.normals * (model.A[i] * x);
    }
    lp.constraint_matrix(ku + p * k, nu) = 1.0;  // margin capped to keep the LP bounded
    lp.upper_bounds[ku + p * k] = 1.0;
    const LPResult r = solve_lp(lp);
    margin = std::min(margin, r.status == LPStatus::kOptimal ? -r.objective : -kInfinity);
  }
  out.certificate_margin = margin;
  out.certified = margin >= -10.0 * limits.tolerance;
  return out;
}

}  // namespace cctmpc
