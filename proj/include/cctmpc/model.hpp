#pragma once

#include <utility>
#include <vector>

#include "cctmpc/polytope.hpp"
#include "cctmpc/types.hpp"

namespace cctmpc {

/// x+ = A x + B u + B_w w, z = C x + D u, with (A, B) in the convex hull of
/// the vertex pairs and w in the disturbance set.
struct UncertainModel {
  std::vector<Matrix> A;
  std::vector<Matrix> B;
  Matrix C;
  Matrix D;
  HPolytope state_set;
  HPolytope input_set;
  HPolytope disturbance_set;
  /// Maps the disturbance into the state space. Empty means identity.
  Matrix disturbance_input;

  int num_vertices() const { return static_cast<int>(A.size()); }
  int state_dim() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }
  int input_dim() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
  int output_dim() const { return static_cast<int>(C.rows()); }

  Matrix mean_A() const;
  Matrix mean_B() const;
  Matrix effective_disturbance_input() const;

  /// Throws kDimensionMismatch, kInvalidArgument or kUnbounded (for an
  /// unbounded disturbance set).
  void validate() const;

  /// Vertices of the disturbance set mapped through B_w, duplicates removed.
  std::vector<Vector> disturbance_vertices() const;
};

/// Orthonormal basis M of the kernel of [A_mean - I, B_mean]; steady states
/// are (x, u) = M theta.
struct SteadyStateBasis {
  Matrix M;
  int dim() const { return static_cast<int>(M.cols()); }
};

/// Throws kRankDeficient when the kernel dimension differs from n_u.
SteadyStateBasis steady_state_basis(const UncertainModel& model);

/// d_i = max { F_i B_w w : w in W }.
Vector disturbance_bound(const UncertainModel& model, const TemplateConfig& tmpl);

// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// LPV plant A(s) = A0 + s A1 + (1/s) A2, B constant, scheduled by s.
struct LPVScheduler {
  Matrix A0;
  Matrix A1;
  Matrix A2;
  Matrix B;
  Interval initial_range;
  /// Points (s, 1/s) whose hull covers the curve over the initial range. Used
  /// verbatim for the initial range; empty means the chord/tangent triangle.
  std::vector<Vector> initial_hull;

  Matrix A_at(double s) const { return A0 + s * A1 + (1.0 / s) * A2; }
  void validate() const;
};

/// Extreme points of the parameter hull for range, a subset of the hull for
/// any wider range. Throws kRangeNotNested when range leaves initial_range.
std::vector<Vector> parameter_vertices(const LPVScheduler& scheduler, const Interval& range);

/// Vertex pairs (A_i, B_i) at the parameter vertices for range.
std::vector<std::pair<Matrix, Matrix>> restrict_uncertainty(const LPVScheduler& scheduler, const Interval& range);

/// Copies the restricted vertex pairs into model.
void apply_vertex_pairs(UncertainModel& model, const std::vector<std::pair<Matrix, Matrix>>& pairs);

/// True if every vertex pair of inner lies in the convex hull of outer's
/// pairs (LP per pair, tolerance on the equality residual).
bool vertex_hull_nested(const std::vector<std::pair<Matrix, Matrix>>& inner,
                        const std::vector<std::pair<Matrix, Matrix>>& outer, double tol = 1e-8);

}  // namespace cctmpc
