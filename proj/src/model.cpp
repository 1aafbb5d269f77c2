#include "cctmpc/model.hpp"

#include <cmath>

#include "cctmpc/error.hpp"

namespace cctmpc {

Matrix UncertainModel::mean_A() const {
  Matrix m = Matrix::Zero(state_dim(), state_dim());
  for (const auto& a : A) m += a;
  return m / static_cast<double>(A.size());
}

Matrix UncertainModel::mean_B() const {
  Matrix m = Matrix::Zero(state_dim(), input_dim());
  for (const auto& b : B) m += b;
  return m / static_cast<double>(B.size());
}

Matrix UncertainModel::effective_disturbance_input() const {
  if (disturbance_input.size() == 0) return Matrix::Identity(state_dim(), disturbance_set.dim());
  return disturbance_input;
}

void UncertainModel::validate() const {
  if (A.empty()) throw Error(ErrorCode::kInvalidArgument, "model needs at least one vertex pair");
  if (A.size() != B.size()) throw Error(ErrorCode::kDimensionMismatch, "A and B vertex lists differ in length");
  const int n = state_dim(), nu = input_dim();
  for (size_t i = 0; i < A.size(); ++i) {
    if (A[i].rows() != n || A[i].cols() != n)
      throw Error(ErrorCode::kDimensionMismatch, "A[" + std::to_string(i) + "] is not n_x x n_x");
    if (B[i].rows() != n || B[i].cols() != nu)
      throw Error(ErrorCode::kDimensionMismatch, "B[" + std::to_string(i) + "] is not n_x x n_u");
    if (!A[i].allFinite() || !B[i].allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite model entry");
  }
  if (C.cols() != n) throw Error(ErrorCode::kDimensionMismatch, "C must have n_x columns");
  if (D.rows() != C.rows() || D.cols() != nu) throw Error(ErrorCode::kDimensionMismatch, "D must be n_z x n_u");
  if (state_set.dim() != n) throw Error(ErrorCode::kDimensionMismatch, "state set dimension");
  if (input_set.dim() != nu) throw Error(ErrorCode::kDimensionMismatch, "input set dimension");
  if (state_set.offsets.size() != state_set.num_facets() || input_set.offsets.size() != input_set.num_facets() ||
      disturbance_set.offsets.size() != disturbance_set.num_facets())
    throw Error(ErrorCode::kDimensionMismatch, "polytope offsets size");
  const Matrix bw = effective_disturbance_input();
  if (bw.rows() != n || bw.cols() != disturbance_set.dim())
    throw Error(ErrorCode::kDimensionMismatch, "disturbance input must be n_x x n_w");
  for (int k = 0; k < disturbance_set.dim(); ++k) {
    Vector e = Vector::Zero(disturbance_set.dim());
    e[k] = 1.0;
    support_function(disturbance_set, e);
    support_function(disturbance_set, -e);
  }
}

std::vector<Vector> UncertainModel::disturbance_vertices() const {
  const Matrix bw = effective_disturbance_input();
  std::vector<Vector> out;
  for (const auto& w : enumerate_vertices(disturbance_set)) {
    const Vector x = bw * w;
    bool dup = false;
    for (const auto& o : out) dup = dup || (o - x).cwiseAbs().maxCoeff() <= 1e-12;
    if (!dup) out.push_back(x);
  }
  return out;
}

SteadyStateBasis steady_state_basis(const UncertainModel& model) {
  const int n = model.state_dim(), nu = model.input_dim();
  Matrix g(n, n + nu);
  g << model.mean_A() - Matrix::Identity(n, n), model.mean_B();
  Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullV);
  const double tol = 1e-10 * std::max(1.0, svd.singularValues().size() ? svd.singularValues()[0] : 0.0);
  int rank = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) rank += svd.singularValues()[k] > tol;
  const int kernel = n + nu - rank;
  if (kernel != nu)
    throw Error(ErrorCode::kRankDeficient, "steady-state kernel has dimension " + std::to_string(kernel) +
                                               ", expected n_u = " + std::to_string(nu));
  SteadyStateBasis basis{svd.matrixV().rightCols(nu)};
  // Deterministic sign: largest-magnitude entry of each column positive.
  for (int c = 0; c < nu; ++c) {
    Eigen::Index idx;
    basis.M.col(c).cwiseAbs().maxCoeff(&idx);
    if (basis.M(idx, c) < 0) basis.M.col(c) *= -1.0;
  }
  return basis;
}

Vector disturbance_bound(const UncertainModel& model, const TemplateConfig& tmpl) {
  if (tmpl.state_dim() != model.state_dim())
    throw Error(ErrorCode::kDimensionMismatch, "template and model state dimensions differ");
  const Matrix fb = tmpl.F * model.effective_disturbance_input();
  Vector d(tmpl.num_facets());
  for (int i = 0; i < tmpl.num_facets(); ++i) d[i] = support_function(model.disturbance_set, fb.row(i).transpose());
  return d;
}

// ---------------------------------------------------------------------------

void LPVScheduler::validate() const {
  const auto n = A0.rows();
  if (A0.cols() != n || A1.rows() != n || A1.cols() != n || A2.rows() != n || A2.cols() != n || B.rows() != n)
    throw Error(ErrorCode::kDimensionMismatch, "LPV matrices must share the state dimension");
  if (!(initial_range.lo > 0.0) || initial_range.hi < initial_range.lo)
    throw Error(ErrorCode::kInvalidArgument, "LPV range must be positive and ordered");
  for (const auto& p : initial_hull)
    if (p.size() != 2) throw Error(ErrorCode::kDimensionMismatch, "LPV hull points are (s, 1/s) pairs");
}

namespace {

// Triangle through (a, 1/a), (b, 1/b) and the intersection of the tangents
// there. It contains the curve segment because 1/s is convex.
std::vector<Vector> chord_tangent_triangle(double a, double b) {
  if (b - a <= 1e-12 * b) return {vec({a, 1.0 / a})};
  const double s = 2.0 * a * b / (a + b);
  return {vec({a, 1.0 / a}), vec({b, 1.0 / b}), vec({s, 2.0 / a - s / (a * a)})};
}

HPolytope hull_2d(const std::vector<Vector>& pts) { return convex_hull(pts); }

}  // namespace

std::vector<Vector> parameter_vertices(const LPVScheduler& scheduler, const Interval& range) {
  const Interval& init = scheduler.initial_range;
  const double slack = 1e-12 * std::max(1.0, init.hi);
  if (range.lo < init.lo - slack || range.hi > init.hi + slack || range.hi < range.lo)
    throw Error(ErrorCode::kRangeNotNested, "range [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) +
                                                "] is not inside the initial range");
  const bool full = std::abs(range.lo - init.lo) <= slack && std::abs(range.hi - init.hi) <= slack;
  if (scheduler.initial_hull.empty()) return chord_tangent_triangle(range.lo, range.hi);
  if (full) return scheduler.initial_hull;

  const auto tri = chord_tangent_triangle(range.lo, range.hi);
  if (tri.size() == 1) return tri;
  HPolytope outer = hull_2d(scheduler.initial_hull);
  HPolytope inner = hull_2d(tri);
  HPolytope both;
  both.normals.resize(outer.num_facets() + inner.num_facets(), 2);
  both.normals << outer.normals, inner.normals;
  both.offsets.resize(both.normals.rows());
  both.offsets << outer.offsets, inner.offsets;
  return enumerate_vertices(both);
}

std::vector<std::pair<Matrix, Matrix>> restrict_uncertainty(const LPVScheduler& scheduler, const Interval& range) {
  std::vector<std::pair<Matrix, Matrix>> out;
  for (const auto& p : parameter_vertices(scheduler, range))
    out.emplace_back(scheduler.A0 + p[0] * scheduler.A1 + p[1] * scheduler.A2, scheduler.B);
  return out;
}

void apply_vertex_pairs(UncertainModel& model, const std::vector<std::pair<Matrix, Matrix>>& pairs) {
  model.A.clear();
  model.B.clear();
  for (const auto& [a, b] : pairs) {
    model.A.push_back(a);
    model.B.push_back(b);
  }
}

bool vertex_hull_nested(const std::vector<std::pair<Matrix, Matrix>>& inner,
                        const std::vector<std::pair<Matrix, Matrix>>& outer, double tol) {
  auto flatten = [](const Matrix& a, const Matrix& b) {
    Vector v(a.size() + b.size());
    v << Eigen::Map<const Vector>(a.data(), a.size()), Eigen::Map<const Vector>(b.data(), b.size());
    return v;
  };
  std::vector<Vector> pts;
  for (const auto& [a, b] : outer) pts.push_back(flatten(a, b));
  for (const auto& [a, b] : inner)
    if (!in_convex_hull(flatten(a, b), pts, tol)) return false;
  return true;
}

}  // namespace cctmpc
