#pragma once

#include <Eigen/Dense>

namespace dkmpc {

using Scalar = double;
using Index = Eigen::Index;

// Row-major storage throughout: batches are (samples x features) and serialized
// weights flatten row by row.
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

}  // namespace dkmpc
