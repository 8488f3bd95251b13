#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace smod {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

}  // namespace smod
