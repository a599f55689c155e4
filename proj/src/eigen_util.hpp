#pragma once

#include <Eigen/Dense>

namespace pom::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
inline ConstMapMat<T> cmap(const T* p, Eigen::Index rows, Eigen::Index cols) {
    return ConstMapMat<T>(p, rows, cols);
}
template <typename T>
inline MapMat<T> mmap(T* p, Eigen::Index rows, Eigen::Index cols) {
    return MapMat<T>(p, rows, cols);
}

}  // namespace pom::detail
