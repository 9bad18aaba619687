#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace a3m {

using Scalar = double;

template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatrixRowX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec = VectorX<Scalar>;
using RowMat = MatrixRowX<Scalar>;
using MapRowMat = Eigen::Map<RowMat>;
using MapConstRowMat = Eigen::Map<const RowMat>;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

} // namespace a3m
