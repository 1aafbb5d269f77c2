#include "cctmpc/tube.hpp"

#include "cctmpc/error.hpp"

namespace cctmpc {

const char* to_string(RowGroup group) {
  switch (group) {
    case RowGroup::kDynamics: return "dynamics";
    case RowGroup::kCone: return "cone";
    case RowGroup::kState: return "state";
    case RowGroup::kInput: return "input";
  }
  return "unknown";
}

RowGroup SConstraintBlock::group_of(int row) const {
  if (row < dynamics_rows) return RowGroup::kDynamics;
  if (row < dynamics_rows + cone_rows) return RowGroup::kCone;
  if (row < dynamics_rows + cone_rows + state_rows) return RowGroup::kState;
  return RowGroup::kInput;
}

Vector SConstraintBlock::residual(const TubeTransition& t) const {
  if (t.y.size() != param_dim() || t.y_plus.size() != param_dim() || t.u.size() != input_dim())
    throw Error(ErrorCode::kDimensionMismatch, "transition does not match the S block");
  return Gy * t.y + Gu * t.u + Gp * t.y_plus - rhs;
}

Matrix input_selector(int j, int num_vertices, int input_dim) {
  Matrix s = Matrix::Zero(input_dim, num_vertices * input_dim);
  s.middleCols(j * input_dim, input_dim).setIdentity();
  return s;
}

namespace {

void check_dims(const UncertainModel& model, const TemplateConfig& tmpl, const Vector& d) {
  if (tmpl.state_dim() != model.state_dim())
    throw Error(ErrorCode::kDimensionMismatch, "template and model state dimensions differ");
  if (d.size() != tmpl.num_facets()) throw Error(ErrorCode::kDimensionMismatch, "d must have m entries");
}

void fill_dynamics(Matrix& gy, Matrix& gu, Matrix& gp, Vector& rhs, int offset, const UncertainModel& model,
                   const TemplateConfig& tmpl, const Vector& d) {
  const int m = tmpl.num_facets(), v = tmpl.num_vertices(), nu = model.input_dim();
  int r = offset;
  for (int i = 0; i < model.num_vertices(); ++i) {
    const Matrix fa = tmpl.F * model.A[i];
    const Matrix fb = tmpl.F * model.B[i];
    for (int j = 0; j < v; ++j) {
      gy.middleRows(r, m) = fa * tmpl.vertex_maps[j];
      gu.middleRows(r, m).setZero();
      gu.block(r, j * nu, m, nu) = fb;
      gp.middleRows(r, m) = -Matrix::Identity(m, m);
      rhs.segment(r, m) = -d;
      r += m;
    }
  }
}

}  // namespace

SConstraintBlock build_S_block(const UncertainModel& model, const TemplateConfig& tmpl, const Vector& d,
                               ConeForm form) {
  check_dims(model, tmpl, d);
  const int m = tmpl.num_facets(), v = tmpl.num_vertices(), nu = model.input_dim();
  const Matrix cone = form == ConeForm::kReduced ? tmpl.E : tmpl.complete_cone();
  SConstraintBlock b;
  b.dynamics_rows = model.num_vertices() * v * m;
  b.cone_rows = static_cast<int>(cone.rows());
  b.state_rows = v * model.state_set.num_facets();
  b.input_rows = v * model.input_set.num_facets();
  const int rows = b.dynamics_rows + b.cone_rows + b.state_rows + b.input_rows;
  b.Gy = Matrix::Zero(rows, m);
  b.Gu = Matrix::Zero(rows, v * nu);
  b.Gp = Matrix::Zero(rows, m);
  b.rhs = Vector::Zero(rows);
  fill_dynamics(b.Gy, b.Gu, b.Gp, b.rhs, 0, model, tmpl, d);

  int r = b.dynamics_rows;
  if (b.cone_rows > 0) b.Gy.middleRows(r, b.cone_rows) = cone;
  r += b.cone_rows;
  const auto& xs = model.state_set;
  for (int j = 0; j < v; ++j) {
    b.Gy.middleRows(r, xs.num_facets()) = xs.normals * tmpl.vertex_maps[j];
    b.rhs.segment(r, xs.num_facets()) = xs.offsets;
    r += xs.num_facets();
  }
  const auto& us = model.input_set;
  for (int j = 0; j < v; ++j) {
    b.Gu.block(r, j * nu, us.num_facets(), nu) = us.normals;
    b.rhs.segment(r, us.num_facets()) = us.offsets;
    r += us.num_facets();
  }
  return b;
}

void update_dynamics(SConstraintBlock& block, const UncertainModel& model, const TemplateConfig& tmpl,
                     const Vector& d) {
  check_dims(model, tmpl, d);
  const int m = tmpl.num_facets(), v = tmpl.num_vertices();
  const int new_rows = model.num_vertices() * v * m;
  const int tail = block.rows() - block.dynamics_rows;
  Matrix gy(new_rows + tail, block.Gy.cols()), gu(new_rows + tail, block.Gu.cols()),
      gp(new_rows + tail, block.Gp.cols());
  Vector rhs(new_rows + tail);
  gy.bottomRows(tail) = block.Gy.bottomRows(tail);
  gu.bottomRows(tail) = block.Gu.bottomRows(tail);
  gp.bottomRows(tail) = block.Gp.bottomRows(tail);
  rhs.tail(tail) = block.rhs.tail(tail);
  fill_dynamics(gy, gu, gp, rhs, 0, model, tmpl, d);
  block.Gy = std::move(gy);
  block.Gu = std::move(gu);
  block.Gp = std::move(gp);
  block.rhs = std::move(rhs);
  block.dynamics_rows = new_rows;
}

SCheck check_S(const SConstraintBlock& block, const TubeTransition& t, double tol) {
  const Vector res = block.residual(t);
  SCheck out;
  if (res.size() == 0) return out;
  Eigen::Index idx;
  out.worst = res.maxCoeff(&idx);
  out.row = static_cast<int>(idx);
  out.group = block.group_of(out.row);
  out.ok = out.worst <= tol;
  return out;
}

}  // namespace cctmpc
