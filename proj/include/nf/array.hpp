#pragma once

#include <Eigen/Dense>

namespace nf {

/// Dense row-major matrix of doubles. Fields use rows = grid points
/// (y-major flattening, x fastest) and cols = channels.
using Array = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A discretized function on a grid: points x channels.
using Field = Array;

}  // namespace nf
