#pragma once

#include <cmath>
#include <numbers>

#include "cctmpc/mpc.hpp"
#include "cctmpc/rci.hpp"

namespace fixtures {

using namespace cctmpc;

inline Matrix twelve_gon() {
  Matrix f(12, 2);
  for (int k = 0; k < 12; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 12.0;
    f(k, 0) = std::cos(a);
    f(k, 1) = std::sin(a);
  }
  return f;
}

inline UncertainModel illustrative_model() {
  UncertainModel m;
  Matrix a(2, 2), b(2, 1);
  a << 1.1, 1, 0, 1;
  b << 0.5, 1;
  m.A = {a};
  m.B = {b};
  m.C = Matrix(1, 2);
  m.C << 1, 0;
  m.D = Matrix::Zero(1, 1);
  m.state_set = HPolytope::box(vec({-5, -2}), vec({5, 3}));
  m.input_set = HPolytope::box(vec({-1}), vec({2}));
  m.disturbance_set = HPolytope::symmetric_box(vec({0, 0.5}));
  return m;
}

inline RCICostWeights illustrative_weights() {
  RCICostWeights w;
  w.Qv = Matrix::Zero(3, 3);
  w.Qv.diagonal() << 10, 10, 1;
  w.Qc = Matrix::Identity(3, 3);
  w.Qr = Matrix::Constant(1, 1, 100.0);
  return w;
}

inline TubeProblem illustrative_problem() {
  return TubeProblem::build(illustrative_model(), derive_configuration(twelve_gon(), Vector::Ones(12)),
                            illustrative_weights());
}

inline TrackingMPC illustrative_controller(int horizon = 5) {
  TubeProblem p = illustrative_problem();
  MPCConfig cfg;
  cfg.N = horizon;
  cfg.gamma = 0.95;
  cfg.Q = vertex_spread_weight(p, 1e-3);
  cfg.P = terminal_weight(cfg.Q, cfg.gamma);
  return TrackingMPC(std::move(p), cfg);
}

}  // namespace fixtures
