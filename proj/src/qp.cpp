#include "cctmpc/qp.hpp"

#include <algorithm>
#include <cmath>

#include "cctmpc/error.hpp"

namespace cctmpc {

const char* to_string(QPStatus status) {
  switch (status) {
    case QPStatus::kOptimal: return "Optimal";
    case QPStatus::kInfeasible: return "Infeasible";
    case QPStatus::kMaxIterations: return "MaxIterations";
    case QPStatus::kNumericalError: return "NumericalError";
  }
  return "Unknown";
}

const char* to_string(LPStatus status) {
  switch (status) {
    case LPStatus::kOptimal: return "Optimal";
    case LPStatus::kInfeasible: return "Infeasible";
    case LPStatus::kUnbounded: return "Unbounded";
  }
  return "Unknown";
}

void QuadraticProgram::validate() const {
  const Eigen::Index n = linear_cost.size();
  const Eigen::Index m = constraint_matrix.rows();
  if (hessian.rows() != n || hessian.cols() != n)
    throw Error(ErrorCode::kDimensionMismatch, "hessian must be n x n");
  if (constraint_matrix.cols() != n && m > 0)
    throw Error(ErrorCode::kDimensionMismatch, "constraint matrix column count must equal n");
  if (lower_bounds.size() != m || upper_bounds.size() != m)
    throw Error(ErrorCode::kDimensionMismatch, "bounds must have one entry per constraint row");
  const double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
  if (n > 0 && (hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorCode::kInvalidArgument, "hessian is not symmetric");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isnan(lower_bounds[i]) || std::isnan(upper_bounds[i]) || lower_bounds[i] > upper_bounds[i])
      throw Error(ErrorCode::kInvalidArgument, "lower bound exceeds upper bound in row " + std::to_string(i));
  }
  if (!hessian.allFinite() || !linear_cost.allFinite())
    throw Error(ErrorCode::kInvalidArgument, "objective contains non-finite entries");
}

double stationarity_residual(const QuadraticProgram& qp, const Vector& primal, const Vector& dual) {
  Vector residual = qp.hessian * primal + qp.linear_cost;
  if (qp.num_constraints() > 0) residual += qp.constraint_matrix.transpose() * dual;
  return residual.size() ? residual.cwiseAbs().maxCoeff() : 0.0;
}

double constraint_violation(const QuadraticProgram& qp, const Vector& primal) {
  if (qp.num_constraints() == 0) return 0.0;
  const Vector ax = qp.constraint_matrix * primal;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    worst = std::max(worst, qp.lower_bounds[i] - ax[i]);
    worst = std::max(worst, ax[i] - qp.upper_bounds[i]);
  }
  return worst;
}

namespace {

// One side of a constraint row, written as normal' x >= rhs with normal = sign * a_row.
struct SidedRow {
  int row;
  double sign;
  double rhs;
  bool equality;
};

enum class InnerStatus { kOptimal, kInfeasible, kMaxIterations, kNumericalError };

// Goldfarb-Idnani dual active-set method on a strictly convex QP. The factor
// J = L^{-T} of the Hessian H = L L' is updated with plane reflections as
// constraints enter and leave the active set; R is the upper-triangular factor
// of J' N for the active normals N.
class DualActiveSet {
 public:
  DualActiveSet(const Eigen::LLT<Matrix>& llt, const Vector& linear_cost, const SparseMatrix& a,
                const std::vector<SidedRow>& rows, const Vector& row_norms, const QPSettings& settings)
      : n_(static_cast<int>(linear_cost.size())),
        a_(a),
        rows_(rows),
        row_norms_(row_norms),
        settings_(settings) {
    J_ = llt.matrixU().solve(Matrix::Identity(n_, n_));
    R_ = Matrix::Zero(n_, n_);
    x_ = -(J_ * (J_.transpose() * linear_cost));
    multipliers_ = Vector::Zero(n_ + 1);
    state_.assign(rows_.size(), kInactive);
  }

  InnerStatus run(const std::vector<int>& hint) {
    std::vector<char> hinted(rows_.size(), 0);
    for (int c : hint)
      if (c >= 0 && c < static_cast<int>(rows_.size())) hinted[c] = 1;

    for (int c = 0; c < static_cast<int>(rows_.size()); ++c) {
      if (!rows_[c].equality) continue;
      const auto status = add_equality(c);
      if (status != InnerStatus::kOptimal) return status;
    }

    Vector ax = a_.rows() ? Vector(a_ * x_) : Vector();
    while (true) {
      if (iterations_ >= settings_.max_iterations) return InnerStatus::kMaxIterations;
      if (a_.rows()) ax.noalias() = a_ * x_;
      int chosen = -1;
      bool chosen_hinted = false;
      double worst = -settings_.activation_tolerance;
      for (int c = 0; c < static_cast<int>(rows_.size()); ++c) {
        if (state_[c] != kInactive) continue;
        const SidedRow& sr = rows_[c];
        const double slack = (sr.sign * ax[sr.row] - sr.rhs) / row_norms_[sr.row];
        if (slack >= -settings_.activation_tolerance) continue;
        const bool h = hinted[c];
        if ((h && !chosen_hinted) || (h == chosen_hinted && slack < worst)) {
          worst = slack;
          chosen = c;
          chosen_hinted = h;
        }
      }
      if (chosen < 0) return InnerStatus::kOptimal;
      const auto status = enforce(chosen);
      if (status != InnerStatus::kOptimal) return status;
    }
  }

  const Vector& primal() const { return x_; }
  int iterations() const { return iterations_; }

  /// Multipliers mapped back onto the rows of A (convention H x + g + A' y = 0).
  Vector row_duals(Eigen::Index num_rows) const {
    Vector y = Vector::Zero(num_rows);
    for (int k = 0; k < iq_; ++k) {
      const SidedRow& sr = rows_[active_[k]];
      y[sr.row] -= sr.sign * multipliers_[k];
    }
    return y;
  }

  std::vector<int> active_rows() const { return std::vector<int>(active_.begin(), active_.begin() + iq_); }

 private:
  enum State : char { kInactive = 0, kActive = 1, kExcluded = 2 };

  Vector dense_normal(int c) const {
    Vector np = Vector::Zero(n_);
    const SidedRow& sr = rows_[c];
    for (SparseMatrix::InnerIterator it(a_, sr.row); it; ++it) np[it.col()] = sr.sign * it.value();
    return np;
  }

  void compute_directions(const Vector& np) {
    d_ = J_.transpose() * np;
    z_ = J_.rightCols(n_ - iq_) * d_.tail(n_ - iq_);
    r_ = R_.topLeftCorner(iq_, iq_).triangularView<Eigen::Upper>().solve(d_.head(iq_));
  }

  bool primal_direction_vanishes() const {
    const double full = d_.squaredNorm();
    return full == 0.0 || d_.tail(n_ - iq_).squaredNorm() <= 1e-22 * full;
  }

  bool add_constraint(int c) {
    for (int j = n_ - 1; j >= iq_ + 1; --j) {
      double cc = d_[j - 1];
      double ss = d_[j];
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d_[j] = 0.0;
      cc /= h;
      ss /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d_[j - 1] = -h;
      } else {
        d_[j - 1] = h;
      }
      for (int k = 0; k < n_; ++k) {
        const double t1 = J_(k, j - 1);
        const double t2 = J_(k, j);
        J_(k, j - 1) = t1 * cc + t2 * ss;
        J_(k, j) = t1 * ss - t2 * cc;
      }
    }
    R_.col(iq_).head(iq_ + 1) = d_.head(iq_ + 1);
    active_.resize(std::max<size_t>(active_.size(), iq_ + 1));
    active_[iq_] = c;
    ++iq_;
    state_[c] = kActive;
    if (std::abs(d_[iq_ - 1]) <= std::numeric_limits<double>::epsilon() * r_norm_) return false;
    r_norm_ = std::max(r_norm_, std::abs(d_[iq_ - 1]));
    return true;
  }

  // Removes the active entry at position qq; the multiplier slot at iq_ (the
  // pending constraint) shifts down with the others.
  void delete_constraint(int qq) {
    state_[active_[qq]] = kInactive;
    for (int i = qq; i < iq_ - 1; ++i) {
      active_[i] = active_[i + 1];
      multipliers_[i] = multipliers_[i + 1];
      R_.col(i) = R_.col(i + 1);
    }
    multipliers_[iq_ - 1] = multipliers_[iq_];
    multipliers_[iq_] = 0.0;
    R_.col(iq_ - 1).setZero();
    --iq_;
    for (int j = qq; j < iq_; ++j) {
      double cc = R_(j, j);
      double ss = R_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      R_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R_(j, j) = h;
      }
      for (int k = j + 1; k < iq_; ++k) {
        const double t1 = R_(j, k);
        const double t2 = R_(j + 1, k);
        R_(j, k) = t1 * cc + t2 * ss;
        R_(j + 1, k) = t1 * ss - t2 * cc;
      }
      for (int k = 0; k < n_; ++k) {
        const double t1 = J_(k, j);
        const double t2 = J_(k, j + 1);
        J_(k, j) = t1 * cc + t2 * ss;
        J_(k, j + 1) = t1 * ss - t2 * cc;
      }
    }
  }

  InnerStatus add_equality(int c) {
    const Vector np = dense_normal(c);
    compute_directions(np);
    const double residual = np.dot(x_) - rows_[c].rhs;
    if (primal_direction_vanishes()) {
      // Linearly dependent on earlier equalities: consistent or not.
      if (std::abs(residual) <= settings_.feasibility_tolerance * std::max(1.0, row_norms_[rows_[c].row])) {
        state_[c] = kExcluded;
        return InnerStatus::kOptimal;
      }
      return InnerStatus::kInfeasible;
    }
    const double step = -residual / z_.dot(np);
    x_ += step * z_;
    for (int k = 0; k < iq_; ++k) multipliers_[k] -= step * r_[k];
    multipliers_[iq_] = step;
    ++iterations_;
    if (!add_constraint(c)) return InnerStatus::kNumericalError;
    return InnerStatus::kOptimal;
  }

  // Drives the violated inequality c to activity, dropping blocking constraints.
  InnerStatus enforce(int c) {
    const Vector np = dense_normal(c);
    multipliers_[iq_] = 0.0;
    while (true) {
      if (++iterations_ > settings_.max_iterations) return InnerStatus::kMaxIterations;
      compute_directions(np);
      const double slack = np.dot(x_) - rows_[c].rhs;

      double t1 = kInfinity;
      int drop = -1;
      for (int k = 0; k < iq_; ++k) {
        if (rows_[active_[k]].equality) continue;
        if (r_[k] > 0.0) {
          const double ratio = multipliers_[k] / r_[k];
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      double t2 = kInfinity;
      if (!primal_direction_vanishes()) t2 = -slack / z_.dot(np);
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return InnerStatus::kInfeasible;

      if (!std::isfinite(t2)) {
        for (int k = 0; k < iq_; ++k) multipliers_[k] -= t * r_[k];
        multipliers_[iq_] += t;
        delete_constraint(drop);
        continue;
      }

      x_ += t * z_;
      for (int k = 0; k < iq_; ++k) multipliers_[k] -= t * r_[k];
      multipliers_[iq_] += t;
      if (t2 <= t1) {
        if (!add_constraint(c)) {
          // Numerically dependent normal: park the row; the final feasibility
          // check catches any violation it leaves behind.
          delete_constraint(iq_ - 1);
          state_[c] = kExcluded;
        }
        return InnerStatus::kOptimal;
      }
      delete_constraint(drop);
    }
  }

  int n_;
  const SparseMatrix& a_;
  const std::vector<SidedRow>& rows_;
  const Vector& row_norms_;
  const QPSettings& settings_;

  Matrix J_;
  Matrix R_;
  Vector x_;
  Vector d_, z_, r_;
  Vector multipliers_;
  std::vector<int> active_;
  std::vector<char> state_;
  int iq_ = 0;
  double r_norm_ = 1.0;
  int iterations_ = 0;
};

QPStatus to_qp_status(InnerStatus s) {
  switch (s) {
    case InnerStatus::kOptimal: return QPStatus::kOptimal;
    case InnerStatus::kInfeasible: return QPStatus::kInfeasible;
    case InnerStatus::kMaxIterations: return QPStatus::kMaxIterations;
    case InnerStatus::kNumericalError: return QPStatus::kNumericalError;
  }
  return QPStatus::kNumericalError;
}

bool factor_is_usable(const Eigen::LLT<Matrix>& llt, const Matrix& h) {
  if (llt.info() != Eigen::Success) return false;
  if (h.rows() == 0) return true;
  const double max_diag = h.diagonal().cwiseAbs().maxCoeff();
  const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs2().minCoeff();
  return min_pivot > 1e-13 * std::max(max_diag, 1e-300);
}

}  // namespace

QPResult solve_qp(const QuadraticProgram& qp, const std::optional<WarmStart>& warm_start,
                  const QPSettings& settings) {
  qp.validate();
  const int n = qp.num_variables();
  const int m = qp.num_constraints();

  SparseMatrix a = qp.constraint_matrix;
  if (m == 0) a.resize(0, n);
  a.makeCompressed();

  Vector row_norms = Vector::Ones(m);
  std::vector<SidedRow> rows;
  rows.reserve(2 * m);
  // Rows whose coefficients are all zero are decided up front.
  for (int i = 0; i < m; ++i) {
    double norm2 = 0.0;
    for (SparseMatrix::InnerIterator it(a, i); it; ++it) norm2 += it.value() * it.value();
    const double lo = qp.lower_bounds[i];
    const double up = qp.upper_bounds[i];
    if (norm2 == 0.0) {
      if (lo > settings.feasibility_tolerance || up < -settings.feasibility_tolerance) {
        QPResult infeasible;
        infeasible.status = QPStatus::kInfeasible;
        return infeasible;
      }
      continue;
    }
    row_norms[i] = std::sqrt(norm2);
    if (lo == up) {
      rows.push_back({i, 1.0, lo, true});
      continue;
    }
    if (std::isfinite(lo)) rows.push_back({i, 1.0, lo, false});
    if (std::isfinite(up)) rows.push_back({i, -1.0, -up, false});
  }

  std::vector<int> hint;
  if (warm_start && warm_start->dual.size() == m) {
    for (int c = 0; c < static_cast<int>(rows.size()); ++c) {
      const double y = warm_start->dual[rows[c].row];
      if (rows[c].equality) continue;
      if ((rows[c].sign > 0 && y < 0.0) || (rows[c].sign < 0 && y > 0.0)) hint.push_back(c);
    }
  }

  QPResult result;
  Eigen::LLT<Matrix> llt(qp.hessian);
  Vector x;
  Vector y;

  if (factor_is_usable(llt, qp.hessian)) {
    DualActiveSet solver(llt, qp.linear_cost, a, rows, row_norms, settings);
    const InnerStatus status = solver.run(hint);
    result.iterations = solver.iterations();
    result.status = to_qp_status(status);
    if (status != InnerStatus::kOptimal) return result;
    x = solver.primal();
    y = solver.row_duals(m);
  } else {
    // Proximal-point outer loop: each subproblem adds rho/2 |x - x_k|^2.
    const double scale = std::max(1.0, qp.hessian.cwiseAbs().maxCoeff());
    const double rho = settings.proximal_weight * scale;
    Matrix h_reg = qp.hessian;
    h_reg.diagonal().array() += rho;
    Eigen::LLT<Matrix> reg_llt(h_reg);
    if (reg_llt.info() != Eigen::Success) {
      result.status = QPStatus::kNumericalError;
      return result;
    }
    x = Vector::Zero(n);
    if (warm_start && warm_start->primal.size() == n) x = warm_start->primal;
    bool converged = false;
    for (int outer = 0; outer < settings.max_proximal_iterations; ++outer) {
      const Vector g = qp.linear_cost - rho * x;
      DualActiveSet solver(reg_llt, g, a, rows, row_norms, settings);
      const InnerStatus status = solver.run(hint);
      result.iterations += solver.iterations();
      if (status != InnerStatus::kOptimal) {
        result.status = to_qp_status(status);
        return result;
      }
      const Vector next = solver.primal();
      const double step = (next - x).cwiseAbs().maxCoeff();
      x = next;
      y = solver.row_duals(m);
      hint = solver.active_rows();
      if (step <= 1e-11 * (1.0 + x.cwiseAbs().maxCoeff())) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      result.status = QPStatus::kMaxIterations;
      return result;
    }
  }

  const double violation = constraint_violation(qp, x);
  if (violation > settings.feasibility_tolerance * std::max(1.0, row_norms.size() ? row_norms.maxCoeff() : 1.0)) {
    result.status = QPStatus::kNumericalError;
    return result;
  }
  result.status = QPStatus::kOptimal;
  result.primal = std::move(x);
  result.dual = std::move(y);
  result.objective = qp.objective(result.primal);
  return result;
}

// ---------------------------------------------------------------------------
// Dense two-phase simplex.

namespace {

class Tableau {
 public:
  Tableau(Matrix t, std::vector<int> basis) : t_(std::move(t)), basis_(std::move(basis)) {}

  Matrix& data() { return t_; }
  const std::vector<int>& basis() const { return basis_; }
  std::vector<int>& basis() { return basis_; }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[r] = c;
  }

  // Minimizes the objective held in the last row over columns [0, cols).
  // Returns false on unboundedness.
  bool optimize(int cols) {
    const int rows = static_cast<int>(t_.rows()) - 1;
    const int rhs = static_cast<int>(t_.cols()) - 1;
    int degenerate_streak = 0;
    for (int iter = 0; iter < 100000; ++iter) {
      const bool bland = degenerate_streak > 50;
      int enter = -1;
      double best = -kPivotTol;
      for (int j = 0; j < cols; ++j) {
        if (t_(rows, j) < best) {
          enter = j;
          if (bland) break;
          best = t_(rows, j);
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double ratio = kInfinity;
      for (int i = 0; i < rows; ++i) {
        if (t_(i, enter) > kPivotTol) {
          const double q = t_(i, rhs) / t_(i, enter);
          if (q < ratio - 1e-12 || (q <= ratio + 1e-12 && leave >= 0 && basis_[i] < basis_[leave])) {
            ratio = q;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      degenerate_streak = ratio <= 1e-12 ? degenerate_streak + 1 : 0;
      pivot(leave, enter);
    }
    return true;
  }

  static constexpr double kPivotTol = 1e-9;

 private:
  Matrix t_;
  std::vector<int> basis_;
};

}  // namespace

LPResult solve_lp(const LinearProgram& lp) {
  const int n = static_cast<int>(lp.cost.size());
  const int k = static_cast<int>(lp.constraint_matrix.rows());
  if (lp.constraint_matrix.cols() != n && k > 0)
    throw Error(ErrorCode::kDimensionMismatch, "LP constraint matrix column count must equal n");
  if (lp.lower_bounds.size() != k || lp.upper_bounds.size() != k)
    throw Error(ErrorCode::kDimensionMismatch, "LP bounds must have one entry per row");

  struct StdRow {
    Vector coeffs;
    double rhs;
    bool has_slack;
  };
  std::vector<StdRow> std_rows;
  for (int i = 0; i < k; ++i) {
    const Vector a = lp.constraint_matrix.row(i).transpose();
    const double lo = lp.lower_bounds[i];
    const double up = lp.upper_bounds[i];
    if (lo > up) {
      LPResult r;
      r.status = LPStatus::kInfeasible;
      return r;
    }
    if (lo == up) {
      std_rows.push_back({a, lo, false});
      continue;
    }
    if (std::isfinite(up)) std_rows.push_back({a, up, true});
    if (std::isfinite(lo)) std_rows.push_back({-a, -lo, true});
  }

  const int rows = static_cast<int>(std_rows.size());
  int num_slacks = 0;
  for (const auto& r : std_rows) num_slacks += r.has_slack ? 1 : 0;

  // Columns: x+ (n), x- (n), slacks, artificials.
  std::vector<int> artificial_rows;
  std::vector<double> row_sign(rows, 1.0);
  for (int i = 0; i < rows; ++i) {
    if (std_rows[i].rhs < 0.0) row_sign[i] = -1.0;
    if (!std_rows[i].has_slack || row_sign[i] < 0.0) artificial_rows.push_back(i);
  }
  const int num_art = static_cast<int>(artificial_rows.size());
  const int art0 = 2 * n + num_slacks;
  const int cols = art0 + num_art;

  Matrix t = Matrix::Zero(rows + 1, cols + 1);
  std::vector<int> basis(rows, -1);
  int slack_col = 2 * n;
  int art_col = art0;
  for (int i = 0; i < rows; ++i) {
    const double s = row_sign[i];
    t.row(i).segment(0, n) = s * std_rows[i].coeffs.transpose();
    t.row(i).segment(n, n) = -s * std_rows[i].coeffs.transpose();
    t(i, cols) = s * std_rows[i].rhs;
    if (std_rows[i].has_slack) {
      t(i, slack_col) = s;
      if (s > 0.0) basis[i] = slack_col;
      ++slack_col;
    }
    if (basis[i] < 0) {
      t(i, art_col) = 1.0;
      basis[i] = art_col;
      ++art_col;
    }
  }

  Tableau tab(std::move(t), std::move(basis));
  Matrix& tt = tab.data();

  if (num_art > 0) {
    tt.row(rows).setZero();
    for (int j = art0; j < cols; ++j) tt(rows, j) = 1.0;
    for (int i = 0; i < rows; ++i)
      if (tab.basis()[i] >= art0) tt.row(rows) -= tt.row(i);
    tab.optimize(cols);
    const double infeasibility = -tt(rows, cols);
    const double scale = 1.0 + tt.col(cols).head(rows).cwiseAbs().maxCoeff();
    if (infeasibility > 1e-9 * scale) {
      LPResult r;
      r.status = LPStatus::kInfeasible;
      return r;
    }
    // Drive remaining artificials out of the basis.
    for (int i = 0; i < rows; ++i) {
      if (tab.basis()[i] < art0) continue;
      int enter = -1;
      for (int j = 0; j < art0; ++j) {
        if (std::abs(tt(i, j)) > Tableau::kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter >= 0) tab.pivot(i, enter);
      // Otherwise the row is redundant; its artificial stays basic at zero
      // and its column is excluded from phase two.
    }
  }

  tt.row(rows).setZero();
  for (int j = 0; j < n; ++j) {
    tt(rows, j) = lp.cost[j];
    tt(rows, n + j) = -lp.cost[j];
  }
  for (int i = 0; i < rows; ++i) {
    const int b = tab.basis()[i];
    const double cb = tt(rows, b);
    if (b < art0 && cb != 0.0) tt.row(rows) -= cb * tt.row(i);
  }
  for (int j = art0; j < cols; ++j) tt(rows, j) = 0.0;

  LPResult result;
  if (!tab.optimize(art0)) {
    result.status = LPStatus::kUnbounded;
    return result;
  }
  Vector z = Vector::Zero(cols);
  for (int i = 0; i < rows; ++i) z[tab.basis()[i]] = tt(i, cols);
  result.primal = z.head(n) - z.segment(n, n);
  result.objective = lp.cost.dot(result.primal);
  result.status = LPStatus::kOptimal;
  return result;
}

}  // namespace cctmpc
