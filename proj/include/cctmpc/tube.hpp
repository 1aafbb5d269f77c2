#pragma once

#include <string>

#include "cctmpc/model.hpp"
#include "cctmpc/polytope.hpp"

namespace cctmpc {

/// One-step tube transition (y, u, y+), u stacking the v vertex inputs.
struct TubeTransition {
  Vector y;
  Vector u;
  Vector y_plus;
};

enum class RowGroup { kDynamics, kCone, kState, kInput };

const char* to_string(RowGroup group);

/// Which configuration rows enter the block.
enum class ConeForm {
  /// Redundancy-free rows of the template (used in every solve).
  kReduced,
  /// All v*m rows F V_j y - y <= 0, matching the closed-form size count.
  kComplete,
};

/// Linear inequalities Gy y + Gu u + Gp y+ <= rhs describing admissible
/// transitions, ordered as dynamics (model vertex, tube vertex, facet), cone,
/// state (tube vertex, facet) and input (tube vertex, facet).
struct SConstraintBlock {
  Matrix Gy;
  Matrix Gu;
  Matrix Gp;
  Vector rhs;
  int dynamics_rows = 0;
  int cone_rows = 0;
  int state_rows = 0;
  int input_rows = 0;

  int rows() const { return static_cast<int>(rhs.size()); }
  int param_dim() const { return static_cast<int>(Gy.cols()); }
  int input_dim() const { return static_cast<int>(Gu.cols()); }
  RowGroup group_of(int row) const;
  /// Row residuals Gy y + Gu u + Gp y+ - rhs.
  Vector residual(const TubeTransition& t) const;
};

SConstraintBlock build_S_block(const UncertainModel& model, const TemplateConfig& tmpl, const Vector& d,
                               ConeForm form = ConeForm::kReduced);

/// Rewrites only the dynamics group after the vertex pairs of model changed.
/// The number of model vertices may change.
void update_dynamics(SConstraintBlock& block, const UncertainModel& model, const TemplateConfig& tmpl,
                     const Vector& d);

/// Block selector U_j = e_j' (x) I_nu.
Matrix input_selector(int j, int num_vertices, int input_dim);

struct SCheck {
  bool ok = true;
  double worst = -kInfinity;
  RowGroup group = RowGroup::kDynamics;
  int row = -1;
};

SCheck check_S(const SConstraintBlock& block, const TubeTransition& t, double tol);

}  // namespace cctmpc
