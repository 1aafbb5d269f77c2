#pragma once

#include "cctmpc/polytope.hpp"
#include "cctmpc/qp.hpp"

namespace cctmpc {

struct InterpolationWeights {
  Vector lambda;
};

/// Minimum-norm convex weights with sum_j lambda_j V_j y0 = x. Throws
/// kInfeasible when x is not in X(y0) (tolerance 1e-6), kSolverFailure on
/// solver breakdown.
InterpolationWeights interpolation_weights(const Vector& x, const Vector& y0, const TemplateConfig& tmpl,
                                           const QPSettings& settings = {});

/// u = sum_j lambda_j u0_j with u0 stacking the v vertex inputs.
Vector control_input(const InterpolationWeights& w, const Vector& u0);

/// Largest violation of the weight invariants: sign, sum and reconstruction.
double interpolation_residual(const InterpolationWeights& w, const Vector& x, const Vector& y0,
                              const TemplateConfig& tmpl);

}  // namespace cctmpc
