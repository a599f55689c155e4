#pragma once

#include <optional>
#include <vector>

#include "pom/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its operands (all operands must share a tape).
namespace pom::ops {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// x[..., in] -> x W^T + b, with w [out x in] and optional bias [out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> bias = std::nullopt);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> add_scalar(Var<T> a, T value);

/// Adds a [D] vector to every row of x[..., D].
template <typename T>
Var<T> add_row_vector(Var<T> x, Var<T> v);

template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> gelu(Var<T> a);
template <typename T>
Var<T> silu(Var<T> a);
template <typename T>
Var<T> identity(Var<T> a);

/// x[B x N x D] * (offset + scale[B x D]) + shift[B x D], the per-sample
/// scale/shift broadcast over the sequence axis. shift may be absent.
template <typename T>
Var<T> scale_shift(Var<T> x, Var<T> scale, std::optional<Var<T>> shift, T offset);

template <typename T>
Var<T> reduce_mean(Var<T> x, std::size_t axis);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);
/// mean((a - b)^2) over all elements.
template <typename T>
Var<T> mse(Var<T> a, Var<T> b);

template <typename T>
std::vector<Var<T>> chunk(Var<T> x, std::size_t parts, std::size_t axis);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

/// Affine-free layer norm over the last axis.
template <typename T>
Var<T> layer_norm(Var<T> x, T eps);

/// Rows of table[V x D] selected by `indices`; result is [indices.size() x D].
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> indices);

}  // namespace pom::ops
