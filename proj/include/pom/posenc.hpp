#pragma once

#include <cstddef>
#include <vector>

#include "pom/tensor.hpp"

// Sinusoidal positional encodings over 1 to 3 coordinate axes. Each axis gets
// d / axes channels: sin bands first, then cos bands, with frequencies
// 10000^(-f / half) for f < half = d / (2·axes). Axis blocks are concatenated.
namespace pom {

/// positions[i] holds the coordinates of token i (same count, 1 to 3, for
/// every token). Returns [positions.size() x d]. Throws std::invalid_argument
/// if d is not divisible by 2·axes.
template <typename T>
Tensor<T> sinusoidal_pe(const std::vector<std::vector<double>>& positions, std::size_t d);

/// Row-major grid of h x w tokens, coordinates (row, col).
template <typename T>
Tensor<T> grid_pe_2d(std::size_t h, std::size_t w, std::size_t d);

/// Frame-major grid of f x h x w tokens, coordinates (frame, row, col).
template <typename T>
Tensor<T> grid_pe_3d(std::size_t f, std::size_t h, std::size_t w, std::size_t d);

}  // namespace pom
