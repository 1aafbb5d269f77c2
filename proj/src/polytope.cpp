#include "cctmpc/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "cctmpc/error.hpp"
#include "cctmpc/qp.hpp"

namespace cctmpc {

bool HPolytope::contains(const Vector& x, double tol) const { return max_violation(x) <= tol; }

double HPolytope::max_violation(const Vector& x) const {
  if (normals.rows() == 0) return -kInfinity;
  return (normals * x - offsets).maxCoeff();
}

bool HPolytope::is_empty() const {
  LinearProgram lp{Vector::Zero(dim()), normals, Vector::Constant(num_facets(), -kInfinity), offsets};
  return solve_lp(lp).status == LPStatus::kInfeasible;
}

HPolytope HPolytope::box(const Vector& lower, const Vector& upper) {
  const int n = static_cast<int>(lower.size());
  if (upper.size() != n) throw Error(ErrorCode::kDimensionMismatch, "box bounds differ in size");
  HPolytope p;
  p.normals = Matrix::Zero(2 * n, n);
  p.offsets.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    p.normals(i, i) = 1.0;
    p.offsets[i] = upper[i];
    p.normals(n + i, i) = -1.0;
    p.offsets[n + i] = -lower[i];
  }
  return p;
}

double support_function(const HPolytope& p, const Vector& direction) {
  if (direction.size() != p.dim()) throw Error(ErrorCode::kDimensionMismatch, "direction size differs from polytope");
  LinearProgram lp{-direction, p.normals, Vector::Constant(p.num_facets(), -kInfinity), p.offsets};
  const LPResult r = solve_lp(lp);
  if (r.status == LPStatus::kUnbounded) throw Error(ErrorCode::kUnbounded, "support function is unbounded");
  if (r.status == LPStatus::kInfeasible) throw Error(ErrorCode::kEmpty, "support function of an empty set");
  return -r.objective;
}

// ---------------------------------------------------------------------------
// Double description.

namespace {

class Bitset {
 public:
  explicit Bitset(int bits = 0) : words_((bits + 63) / 64, 0) {}

  void set(int i) { words_[i / 64] |= (std::uint64_t{1} << (i % 64)); }

  Bitset operator&(const Bitset& o) const {
    Bitset r;
    r.words_.resize(words_.size());
    for (size_t k = 0; k < words_.size(); ++k) r.words_[k] = words_[k] & o.words_[k];
    return r;
  }

  int count() const {
    int c = 0;
    for (auto w : words_) c += __builtin_popcountll(w);
    return c;
  }

  bool contains(const Bitset& sub) const {
    for (size_t k = 0; k < words_.size(); ++k)
      if ((sub.words_[k] & ~words_[k]) != 0) return false;
    return true;
  }

 private:
  std::vector<std::uint64_t> words_;
};

struct Ray {
  Vector z;
  Bitset zeros;
};

}  // namespace

std::vector<Vector> extreme_rays(const Matrix& a, double tol) {
  const int d = static_cast<int>(a.cols());
  std::vector<Vector> rows;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double norm = a.row(i).norm();
    if (norm > 0.0) rows.push_back(a.row(i).transpose() / norm);
  }
  const int k = static_cast<int>(rows.size());
  if (d == 0) return {};

  // Pivoted selection of d independent rows for the initial simplicial cone.
  std::vector<char> used(k, 0);
  std::vector<int> initial;
  Matrix basis(d, 0);
  for (int step = 0; step < d; ++step) {
    int best = -1;
    double best_norm = 1e-9;
    for (int i = 0; i < k; ++i) {
      if (used[i]) continue;
      Vector res = rows[i];
      if (basis.cols() > 0) res -= basis * (basis.transpose() * rows[i]);
      const double nrm = res.norm();
      if (nrm > best_norm) {
        best_norm = nrm;
        best = i;
      }
    }
    if (best < 0) throw Error(ErrorCode::kUnbounded, "cone is not pointed (constraint matrix rank deficient)");
    Vector res = rows[best];
    if (basis.cols() > 0) res -= basis * (basis.transpose() * rows[best]);
    basis.conservativeResize(d, basis.cols() + 1);
    basis.col(basis.cols() - 1) = res / res.norm();
    used[best] = 1;
    initial.push_back(best);
  }

  Matrix a_init(d, d);
  for (int j = 0; j < d; ++j) a_init.row(j) = rows[initial[j]].transpose();
  const Matrix init_rays = -a_init.partialPivLu().solve(Matrix::Identity(d, d));

  std::vector<int> processed = initial;
  auto zero_set = [&](const Vector& z) {
    Bitset b(k);
    for (int idx : processed)
      if (std::abs(rows[idx].dot(z)) <= tol) b.set(idx);
    return b;
  };

  std::vector<Ray> rays;
  for (int j = 0; j < d; ++j) {
    Vector z = init_rays.col(j);
    z /= z.norm();
    rays.push_back({z, zero_set(z)});
  }

  for (int idx = 0; idx < k; ++idx) {
    if (used[idx]) continue;
    const Vector& row = rows[idx];
    std::vector<double> vals(rays.size());
    std::vector<int> pos, neg;
    for (size_t r = 0; r < rays.size(); ++r) {
      vals[r] = row.dot(rays[r].z);
      if (vals[r] > tol) pos.push_back(static_cast<int>(r));
      else if (vals[r] < -tol) neg.push_back(static_cast<int>(r));
    }
    if (pos.empty()) {
      for (size_t r = 0; r < rays.size(); ++r)
        if (std::abs(vals[r]) <= tol) rays[r].zeros.set(idx);
      processed.push_back(idx);
      continue;
    }

    std::vector<Ray> next;
    for (size_t r = 0; r < rays.size(); ++r) {
      if (vals[r] > tol) continue;
      Ray kept = rays[r];
      if (vals[r] >= -tol) kept.zeros.set(idx);
      next.push_back(std::move(kept));
    }
    processed.push_back(idx);
    for (int p : pos) {
      for (int q : neg) {
        const Bitset common = rays[p].zeros & rays[q].zeros;
        if (common.count() < d - 2) continue;
        bool adjacent = true;
        for (size_t r = 0; r < rays.size() && adjacent; ++r) {
          if (static_cast<int>(r) == p || static_cast<int>(r) == q) continue;
          if (rays[r].zeros.contains(common)) adjacent = false;
        }
        if (!adjacent) continue;
        Vector z = vals[p] * rays[q].z - vals[q] * rays[p].z;
        const double nrm = z.norm();
        if (nrm <= 1e-14) continue;
        z /= nrm;
        next.push_back({z, zero_set(z)});
      }
    }
    rays = std::move(next);
    if (rays.empty()) break;
  }

  std::vector<Vector> out;
  out.reserve(rays.size());
  for (auto& r : rays) out.push_back(std::move(r.z));
  return out;
}

namespace {

// Refines a vertex estimate by solving its active facets exactly.
Vector polish_vertex(const HPolytope& p, const Vector& x) {
  const int n = p.dim();
  const Vector res = p.normals * x - p.offsets;
  std::vector<int> active;
  const double scale = 1.0 + x.cwiseAbs().maxCoeff();
  for (int i = 0; i < p.num_facets(); ++i)
    if (std::abs(res[i]) <= 1e-7 * scale * std::max(1.0, p.normals.row(i).norm())) active.push_back(i);
  if (static_cast<int>(active.size()) < n) return x;
  Matrix a(active.size(), n);
  Vector b(active.size());
  for (size_t r = 0; r < active.size(); ++r) {
    a.row(r) = p.normals.row(active[r]);
    b[r] = p.offsets[active[r]];
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < n) return x;
  const Vector refined = qr.solve(b);
  return (refined - x).cwiseAbs().maxCoeff() <= 1e-6 * scale ? refined : x;
}

}  // namespace

std::vector<Vector> enumerate_vertices(const HPolytope& p) {
  const int n = p.dim();
  if (n > kMaxEnumerationDim)
    throw Error(ErrorCode::kDimensionTooLarge, "vertex enumeration limited to dimension " +
                                                   std::to_string(kMaxEnumerationDim));
  if (p.offsets.size() != p.num_facets()) throw Error(ErrorCode::kDimensionMismatch, "offsets size");
  if (!p.normals.allFinite() || !p.offsets.allFinite())
    throw Error(ErrorCode::kInvalidArgument, "polytope has non-finite entries");

  Matrix cone(p.num_facets() + 1, n + 1);
  cone.topLeftCorner(p.num_facets(), n) = p.normals;
  cone.topRightCorner(p.num_facets(), 1) = -p.offsets;
  cone.row(p.num_facets()).setZero();
  cone(p.num_facets(), n) = -1.0;

  std::vector<Vector> rays;
  try {
    rays = extreme_rays(cone);
  } catch (const Error&) {
    throw Error(ErrorCode::kUnbounded, "polytope has a nontrivial recession cone");
  }

  bool recession = false;
  std::vector<Vector> verts;
  for (const auto& z : rays) {
    const double t = z[n];
    if (t <= 1e-10) {
      recession = true;
      continue;
    }
    Vector x = polish_vertex(p, z.head(n) / t);
    bool duplicate = false;
    for (const auto& v : verts) {
      if ((v - x).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + x.cwiseAbs().maxCoeff())) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) verts.push_back(std::move(x));
  }
  if (verts.empty()) throw Error(ErrorCode::kEmpty, "polytope is empty");
  if (recession) throw Error(ErrorCode::kUnbounded, "polytope has a nontrivial recession cone");
  return verts;
}

HPolytope convex_hull(const std::vector<Vector>& points) {
  if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "convex hull of no points");
  const int n = static_cast<int>(points.front().size());
  if (n > kMaxEnumerationDim) throw Error(ErrorCode::kDimensionTooLarge, "convex hull limited to dimension 4");
  // Shift to the centroid so the polar cone is well scaled.
  Vector centroid = Vector::Zero(n);
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Matrix cone(points.size(), n + 1);
  for (size_t i = 0; i < points.size(); ++i) {
    cone.row(i).head(n) = (points[i] - centroid).transpose();
    cone(i, n) = -1.0;
  }
  std::vector<Vector> rays;
  try {
    rays = extreme_rays(cone);
  } catch (const Error&) {
    throw Error(ErrorCode::kInvalidArgument, "points are not full-dimensional");
  }
  HPolytope hull;
  hull.normals.resize(0, n);
  std::vector<Vector> normals;
  std::vector<double> offsets;
  for (const auto& z : rays) {
    const double nrm = z.head(n).norm();
    if (nrm <= 1e-12) continue;
    normals.push_back(z.head(n) / nrm);
    offsets.push_back(z[n] / nrm);
  }
  hull.normals.resize(normals.size(), n);
  hull.offsets.resize(normals.size());
  for (size_t i = 0; i < normals.size(); ++i) {
    hull.normals.row(i) = normals[i].transpose();
    hull.offsets[i] = offsets[i] + normals[i].dot(centroid);
  }
  return hull;
}

std::vector<int> nonredundant_cone_rows(const Matrix& e) {
  const int q = static_cast<int>(e.rows());
  const int m = static_cast<int>(e.cols());
  std::vector<int> kept;
  std::vector<Vector> rows;
  std::vector<char> alive(q, 0);
  for (int i = 0; i < q; ++i) {
    const double nrm = e.row(i).norm();
    if (nrm > 1e-12) alive[i] = 1;
    rows.push_back(nrm > 0.0 ? Vector(e.row(i).transpose() / nrm) : Vector::Zero(m));
  }
  for (int i = 0; i < q; ++i) {
    if (!alive[i]) continue;
    std::vector<int> others;
    for (int j = 0; j < q; ++j)
      if (j != i && alive[j]) others.push_back(j);
    LinearProgram lp;
    lp.cost = -rows[i];
    lp.constraint_matrix.resize(others.size() + 1, m);
    for (size_t r = 0; r < others.size(); ++r) lp.constraint_matrix.row(r) = rows[others[r]].transpose();
    lp.constraint_matrix.row(others.size()) = rows[i].transpose();
    lp.lower_bounds = Vector::Constant(others.size() + 1, -kInfinity);
    lp.upper_bounds = Vector::Zero(others.size() + 1);
    lp.upper_bounds[others.size()] = 1.0;
    const LPResult r = solve_lp(lp);
    // The optimum is 1 when row i cuts the cone of the others, 0 when implied.
    if (r.status == LPStatus::kOptimal && -r.objective <= 1e-9) alive[i] = 0;
  }
  for (int i = 0; i < q; ++i)
    if (alive[i]) kept.push_back(i);
  return kept;
}

Matrix reduce_cone(const Matrix& e) {
  const std::vector<int> kept = nonredundant_cone_rows(e);
  Matrix out(kept.size(), e.cols());
  for (size_t r = 0; r < kept.size(); ++r) out.row(r) = e.row(kept[r]);
  return out;
}

HPolytope remove_redundant(const HPolytope& p) {
  const int k = p.num_facets();
  const int n = p.dim();
  std::vector<char> alive(k, 1);
  for (int i = 0; i < k; ++i) {
    const double nrm = p.normals.row(i).norm();
    if (nrm <= 1e-12) {
      alive[i] = 0;
      continue;
    }
    std::vector<int> rows;
    for (int j = 0; j < k; ++j)
      if (alive[j]) rows.push_back(j);
    LinearProgram lp;
    lp.cost = -p.normals.row(i).transpose() / nrm;
    lp.constraint_matrix.resize(rows.size(), n);
    lp.lower_bounds = Vector::Constant(rows.size(), -kInfinity);
    lp.upper_bounds.resize(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      const double rn = p.normals.row(rows[r]).norm();
      lp.constraint_matrix.row(r) = p.normals.row(rows[r]) / rn;
      lp.upper_bounds[r] = p.offsets[rows[r]] / rn + (rows[r] == i ? 1.0 : 0.0);
    }
    const LPResult r = solve_lp(lp);
    if (r.status == LPStatus::kOptimal && -r.objective <= p.offsets[i] / nrm + 1e-9) alive[i] = 0;
  }
  HPolytope out;
  int count = 0;
  for (int i = 0; i < k; ++i) count += alive[i];
  out.normals.resize(count, n);
  out.offsets.resize(count);
  int r = 0;
  for (int i = 0; i < k; ++i) {
    if (!alive[i]) continue;
    out.normals.row(r) = p.normals.row(i);
    out.offsets[r] = p.offsets[i];
    ++r;
  }
  return out;
}

double distance_to_polytope(const Vector& x, const HPolytope& p) {
  if (x.size() != p.dim()) throw Error(ErrorCode::kDimensionMismatch, "point dimension differs from polytope");
  if (p.contains(x, 0.0)) return 0.0;
  QuadraticProgram qp;
  qp.hessian = Matrix::Identity(p.dim(), p.dim());
  qp.linear_cost = -x;
  qp.constraint_matrix = p.normals.sparseView();
  qp.lower_bounds = Vector::Constant(p.num_facets(), -kInfinity);
  qp.upper_bounds = p.offsets;
  const QPResult r = solve_qp(qp);
  if (r.status == QPStatus::kInfeasible) throw Error(ErrorCode::kEmpty, "distance to an empty polytope");
  if (!r.optimal()) throw Error(ErrorCode::kSolverFailure, std::string("distance QP: ") + to_string(r.status));
  return (r.primal - x).norm();
}

double hausdorff_distance(const HPolytope& p, const HPolytope& q) {
  if (p.dim() != q.dim()) throw Error(ErrorCode::kDimensionMismatch, "Hausdorff distance between different dimensions");
  // The directed distance sup_{a in P} d(a, Q) is convex in a, so it peaks at a vertex.
  double worst = 0.0;
  for (const auto& v : enumerate_vertices(p)) worst = std::max(worst, distance_to_polytope(v, q));
  for (const auto& v : enumerate_vertices(q)) worst = std::max(worst, distance_to_polytope(v, p));
  return worst;
}

bool in_convex_hull(const Vector& x, const std::vector<Vector>& points, double tol) {
  if (points.empty()) return false;
  const int n = static_cast<int>(x.size());
  const int k = static_cast<int>(points.size());
  LinearProgram lp;
  lp.cost = Vector::Zero(k);
  lp.constraint_matrix = Matrix::Zero(n + 1 + k, k);
  lp.lower_bounds.resize(n + 1 + k);
  lp.upper_bounds.resize(n + 1 + k);
  for (int j = 0; j < k; ++j) {
    lp.constraint_matrix.block(0, j, n, 1) = points[j];
    lp.constraint_matrix(n, j) = 1.0;
    lp.constraint_matrix(n + 1 + j, j) = 1.0;
  }
  lp.lower_bounds.head(n) = x.array() - tol;
  lp.upper_bounds.head(n) = x.array() + tol;
  lp.lower_bounds[n] = 1.0;
  lp.upper_bounds[n] = 1.0;
  lp.lower_bounds.tail(k).setZero();
  lp.upper_bounds.tail(k).setConstant(kInfinity);
  return solve_lp(lp).status == LPStatus::kOptimal;
}

// ---------------------------------------------------------------------------

std::vector<Vector> TemplateConfig::vertices(const Vector& y) const {
  std::vector<Vector> out;
  out.reserve(vertex_maps.size());
  for (const auto& v : vertex_maps) out.push_back(v * y);
  return out;
}

bool TemplateConfig::in_cone(const Vector& y, double tol) const {
  return E.rows() == 0 || (E * y).maxCoeff() <= tol;
}

Matrix TemplateConfig::complete_cone() const {
  const int m = num_facets();
  Matrix out(num_vertices() * m, m);
  for (int j = 0; j < num_vertices(); ++j) {
    out.middleRows(j * m, m) = F * vertex_maps[j] - Matrix::Identity(m, m);
  }
  return out;
}

namespace {

void finish_template(TemplateConfig& t) {
  t.mean_vertex_map = Matrix::Zero(t.state_dim(), t.num_facets());
  for (const auto& v : t.vertex_maps) t.mean_vertex_map += v;
  t.mean_vertex_map /= static_cast<double>(t.vertex_maps.size());
  t.E = reduce_cone(t.E_raw);
}

}  // namespace

TemplateConfig derive_configuration(const Matrix& F, const Vector& y_ref) {
  const int m = static_cast<int>(F.rows());
  const int n = static_cast<int>(F.cols());
  if (y_ref.size() != m) throw Error(ErrorCode::kDimensionMismatch, "y_ref must have one entry per facet");

  std::vector<Vector> verts;
  try {
    verts = enumerate_vertices(HPolytope{F, y_ref});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDimensionTooLarge) throw;
    throw Error(ErrorCode::kEmptyOrUnbounded, std::string("X(y_ref) is not a nonempty polytope: ") + e.what());
  }

  TemplateConfig t;
  t.F = F;
  std::vector<std::pair<std::vector<int>, Vector>> labelled;
  for (const auto& x : verts) {
    const Vector res = F * x - y_ref;
    std::vector<int> active;
    for (int i = 0; i < m; ++i)
      if (std::abs(res[i]) <= 1e-9) active.push_back(i);
    if (static_cast<int>(active.size()) > n)
      throw Error(ErrorCode::kDegenerateVertex, "a vertex of X(y_ref) has " + std::to_string(active.size()) +
                                                    " active facets (> " + std::to_string(n) + ")");
    if (static_cast<int>(active.size()) < n)
      throw Error(ErrorCode::kDegenerateVertex, "a vertex of X(y_ref) has fewer than n active facets");
    labelled.emplace_back(active, x);
  }
  std::sort(labelled.begin(), labelled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<Vector> raw_rows;
  for (const auto& [active, x] : labelled) {
    Matrix fa(n, n);
    for (int k = 0; k < n; ++k) fa.row(k) = F.row(active[k]);
    Eigen::FullPivLU<Matrix> lu(fa);
    if (lu.rank() < n) throw Error(ErrorCode::kDegenerateVertex, "active facet normals are linearly dependent");
    const Matrix inv = lu.inverse();
    Matrix vj = Matrix::Zero(n, m);
    for (int k = 0; k < n; ++k) vj.col(active[k]) = inv.col(k);
    t.vertex_maps.push_back(vj);
    t.active_facets.push_back(active);
    const Matrix fv = F * vj;
    for (int i = 0; i < m; ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      Vector row = fv.row(i).transpose();
      row[i] -= 1.0;
      raw_rows.push_back(row);
    }
  }
  t.E_raw.resize(raw_rows.size(), m);
  for (size_t r = 0; r < raw_rows.size(); ++r) t.E_raw.row(r) = raw_rows[r].transpose();
  finish_template(t);
  return t;
}

TemplateConfig make_template(const Matrix& F, const Matrix& E, const std::vector<Matrix>& vertex_maps) {
  if (vertex_maps.empty()) throw Error(ErrorCode::kInvalidArgument, "template needs at least one vertex map");
  TemplateConfig t;
  t.F = F;
  t.E_raw = E;
  t.vertex_maps = vertex_maps;
  for (const auto& v : vertex_maps)
    if (v.rows() != F.cols() || v.cols() != F.rows())
      throw Error(ErrorCode::kDimensionMismatch, "vertex maps must be n_x x m");
  if (E.cols() != F.rows() && E.rows() > 0) throw Error(ErrorCode::kDimensionMismatch, "E must have m columns");
  finish_template(t);
  return t;
}

TemplateCheck check_template(const TemplateConfig& tmpl, const Vector& y_ref, int samples, unsigned seed,
                             double tol) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.25, 2.0);
  TemplateCheck out;
  const double scale = y_ref.cwiseAbs().maxCoeff();
  int attempts = 0;
  while (out.samples < samples && attempts < 50 * samples) {
    ++attempts;
    const Vector shift = Vector::NullaryExpr(tmpl.state_dim(), [&] { return normal(rng); }) * scale;
    Vector y = unif(rng) * y_ref + tmpl.F * shift;
    y += 0.05 * scale * Vector::NullaryExpr(tmpl.num_facets(), [&] { return normal(rng); });
    if (!tmpl.in_cone(y, 0.0)) continue;
    ++out.samples;
    const auto vs = tmpl.vertices(y);
    for (const auto& v : vs) out.worst_vertex_violation = std::max(out.worst_vertex_violation, (tmpl.F * v - y).maxCoeff());
    if (tmpl.state_dim() <= kMaxEnumerationDim) {
      for (const auto& e : enumerate_vertices(tmpl.polytope(y))) {
        double gap = kInfinity;
        for (const auto& v : vs) gap = std::min(gap, (v - e).norm());
        out.worst_enumeration_gap = std::max(out.worst_enumeration_gap, gap);
      }
    }
  }
  out.ok = out.samples > 0 && out.worst_vertex_violation <= tol &&
           out.worst_enumeration_gap <= tol * std::max(1.0, scale);
  return out;
}

bool ParamPolytope::contains(const Vector& x, double tol) const {
  return ((tmpl->F * x - y).array() <= tol).all();
}

bool contains(const ParamPolytope& p, const Vector& x, double tol) { return p.contains(x, tol); }

}  // namespace cctmpc
