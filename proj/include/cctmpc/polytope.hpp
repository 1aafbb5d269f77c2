#pragma once

#include <vector>

#include "cctmpc/types.hpp"

namespace cctmpc {

/// Polytope in halfspace form {x | normals * x <= offsets}.
struct HPolytope {
  Matrix normals;
  Vector offsets;

  int dim() const { return static_cast<int>(normals.cols()); }
  int num_facets() const { return static_cast<int>(normals.rows()); }

  bool contains(const Vector& x, double tol = 1e-9) const;
  /// Largest value of normals * x - offsets (negative inside).
  double max_violation(const Vector& x) const;
  /// LP feasibility check.
  bool is_empty() const;

  static HPolytope box(const Vector& lower, const Vector& upper);
  static HPolytope symmetric_box(const Vector& half_widths) { return box(-half_widths, half_widths); }
};

/// Largest dimension accepted by the vertex and facet enumerators.
inline constexpr int kMaxEnumerationDim = 4;

/// max { <direction, w> : w in p }. Throws Error(kUnbounded) or Error(kEmpty).
double support_function(const HPolytope& p, const Vector& direction);

/// Extreme rays of the pointed cone {z | a * z <= 0}, each scaled to unit norm.
/// Double-description method with combinatorial adjacency. Throws
/// Error(kUnbounded) if the cone contains a line.
std::vector<Vector> extreme_rays(const Matrix& a, double tol = 1e-9);

/// All vertices of a bounded polytope of dimension <= 4.
/// Throws kDimensionTooLarge, kUnbounded or kEmpty.
std::vector<Vector> enumerate_vertices(const HPolytope& p);

/// Facet description of the convex hull of full-dimensional points (dim <= 4).
HPolytope convex_hull(const std::vector<Vector>& points);

/// Returns a row subset of e describing the same cone {y | e y <= 0}. Zero rows,
/// duplicates and rows implied by the remaining ones are removed, each removal
/// certified by an LP.
Matrix reduce_cone(const Matrix& e);

/// Same as reduce_cone but returns the indices of the kept rows.
std::vector<int> nonredundant_cone_rows(const Matrix& e);

/// Drops halfspaces implied by the others (LP per row).
HPolytope remove_redundant(const HPolytope& p);

/// Euclidean distance from x to p (QP).
double distance_to_polytope(const Vector& x, const HPolytope& p);

/// Hausdorff distance between two bounded polytopes, from vertex enumeration
/// and point-to-polytope distance QPs.
double hausdorff_distance(const HPolytope& p, const HPolytope& q);

/// True if x lies in the convex hull of points (LP feasibility, tolerance on
/// the equality residual).
bool in_convex_hull(const Vector& x, const std::vector<Vector>& points, double tol = 1e-8);

// ---------------------------------------------------------------------------

/// Template polytope X(y) = {x | F x <= y} with configuration constraints
/// E y <= 0 under which the vertices of X(y) are V_j y.
struct TemplateConfig {
  Matrix F;
  /// Configuration rows F_i V_j - e_i' for every vertex j and every facet i
  /// not active at j, before redundancy removal.
  Matrix E_raw;
  /// Reduced configuration rows; used in every optimization problem.
  Matrix E;
  std::vector<Matrix> vertex_maps;
  Matrix mean_vertex_map;
  /// Facets meeting at each vertex (empty when imported without derivation).
  std::vector<std::vector<int>> active_facets;

  int num_facets() const { return static_cast<int>(F.rows()); }
  int num_vertices() const { return static_cast<int>(vertex_maps.size()); }
  int state_dim() const { return static_cast<int>(F.cols()); }

  Vector vertex(int j, const Vector& y) const { return vertex_maps[j] * y; }
  std::vector<Vector> vertices(const Vector& y) const;
  bool in_cone(const Vector& y, double tol = 1e-9) const;
  HPolytope polytope(const Vector& y) const { return {F, y}; }

  /// All v*m rows F_i V_j y - y_i <= 0, including the identically zero ones at
  /// active facets. This is the configuration block as it is counted in the
  /// closed-form problem-size formula.
  Matrix complete_cone() const;
};

/// Builds E and V_j from the facets active at each vertex of X(y_ref).
/// Throws kDegenerateVertex when a vertex has more than n active facets at
/// tolerance 1e-9 and kEmptyOrUnbounded when X(y_ref) is not a polytope.
TemplateConfig derive_configuration(const Matrix& F, const Vector& y_ref);

/// Assembles a template from precomputed E and V_j (E is reduced here).
TemplateConfig make_template(const Matrix& F, const Matrix& E, const std::vector<Matrix>& vertex_maps);

/// Result of the configuration consistency check on random cone samples.
struct TemplateCheck {
  bool ok = true;
  int samples = 0;
  double worst_vertex_violation = 0.0;
  double worst_enumeration_gap = 0.0;
};

/// Samples y with E y <= 0 near y_ref and verifies that every V_j y lies in
/// X(y) and that the enumerated vertices of X(y) are among {V_j y}.
TemplateCheck check_template(const TemplateConfig& tmpl, const Vector& y_ref, int samples, unsigned seed,
                             double tol = 1e-7);

/// Parametric polytope X(y) tied to its template.
struct ParamPolytope {
  const TemplateConfig* tmpl;
  Vector y;

  bool contains(const Vector& x, double tol) const;
};

bool contains(const ParamPolytope& p, const Vector& x, double tol);

}  // namespace cctmpc
