#pragma once

#include <Eigen/Dense>

namespace kqr {

// Data matrices are row-major so each observation is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace kqr
