#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <initializer_list>
#include <limits>
#include <vector>

namespace cctmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace cctmpc
