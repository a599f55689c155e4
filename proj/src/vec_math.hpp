#pragma once

// Array forms of the activations in pom/activations.hpp, evaluated through
// Eigen so tanh and exp vectorize. Every tensor-level activation goes through
// these, which keeps the results of different call sites identical.

#include <Eigen/Dense>
#include <cstddef>

#include "pom/activations.hpp"

namespace pom::detail {

template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
template <typename T>
using ArrMap = Eigen::Map<Arr<T>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Arr<T>>;

template <typename T>
inline void gelu_n(const T* x, T* y, std::size_t n) {
    const auto c = static_cast<T>(act::kGeluSqrt2OverPi);
    const auto a = static_cast<T>(act::kGeluCubic);
    const ConstArrMap<T> X(x, static_cast<Eigen::Index>(n));
    ArrMap<T> Y(y, static_cast<Eigen::Index>(n));
    Y = T{0.5} * X * (T{1} + (c * (X + a * X * X * X)).tanh());
}

template <typename T>
inline void gelu_grad_n(const T* x, T* y, std::size_t n) {
    const auto c = static_cast<T>(act::kGeluSqrt2OverPi);
    const auto a = static_cast<T>(act::kGeluCubic);
    const ConstArrMap<T> X(x, static_cast<Eigen::Index>(n));
    ArrMap<T> Y(y, static_cast<Eigen::Index>(n));
    const Arr<T> th = (c * (X + a * X * X * X)).tanh();
    Y = T{0.5} * (T{1} + th) + T{0.5} * X * (T{1} - th * th) * (c * (T{1} + T{3} * a * X * X));
}

/// gelu(x) into y and gelu'(x) into d, sharing one tanh evaluation.
template <typename T>
inline void gelu_with_grad_n(const T* x, T* y, T* d, std::size_t n) {
    const auto c = static_cast<T>(act::kGeluSqrt2OverPi);
    const auto a = static_cast<T>(act::kGeluCubic);
    const ConstArrMap<T> X(x, static_cast<Eigen::Index>(n));
    const Arr<T> th = (c * (X + a * X * X * X)).tanh();
    ArrMap<T>(y, static_cast<Eigen::Index>(n)) = T{0.5} * X * (T{1} + th);
    ArrMap<T>(d, static_cast<Eigen::Index>(n)) =
        T{0.5} * (T{1} + th) + T{0.5} * X * (T{1} - th * th) * (c * (T{1} + T{3} * a * X * X));
}

template <typename T>
inline void sigmoid_n(const T* x, T* y, std::size_t n) {
    const ConstArrMap<T> X(x, static_cast<Eigen::Index>(n));
    ArrMap<T> Y(y, static_cast<Eigen::Index>(n));
    Y = T{1} / (T{1} + (-X).exp());
}

template <typename T>
inline void silu_n(const T* x, T* y, std::size_t n) {
    const ConstArrMap<T> X(x, static_cast<Eigen::Index>(n));
    ArrMap<T> Y(y, static_cast<Eigen::Index>(n));
    Y = X / (T{1} + (-X).exp());
}

template <typename T>
inline void silu_grad_n(const T* x, T* y, std::size_t n) {
    const ConstArrMap<T> X(x, static_cast<Eigen::Index>(n));
    ArrMap<T> Y(y, static_cast<Eigen::Index>(n));
    const Arr<T> s = T{1} / (T{1} + (-X).exp());
    Y = s * (T{1} + X * (T{1} - s));
}

}  // namespace pom::detail
