#pragma once

#include <cmath>

// Scalar activation functions and their derivatives.
//
// GELU is the tanh approximation with the usual constants:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
namespace pom::act {

inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

template <typename T>
inline T sigmoid(T x) {
    return T{1} / (T{1} + std::exp(-x));
}

/// Derivative of sigmoid expressed through its output s.
template <typename T>
inline T sigmoid_grad_from_output(T s) {
    return s * (T{1} - s);
}

template <typename T>
inline T gelu(T x) {
    const T c = static_cast<T>(kGeluSqrt2OverPi);
    const T a = static_cast<T>(kGeluCubic);
    const T inner = c * (x + a * x * x * x);
    return T{0.5} * x * (T{1} + std::tanh(inner));
}

template <typename T>
inline T gelu_grad(T x) {
    const T c = static_cast<T>(kGeluSqrt2OverPi);
    const T a = static_cast<T>(kGeluCubic);
    const T inner = c * (x + a * x * x * x);
    const T th = std::tanh(inner);
    const T dinner = c * (T{1} + T{3} * a * x * x);
    return T{0.5} * (T{1} + th) + T{0.5} * x * (T{1} - th * th) * dinner;
}

template <typename T>
inline T silu(T x) {
    return x * sigmoid(x);
}

template <typename T>
inline T silu_grad(T x) {
    const T s = sigmoid(x);
    return s * (T{1} + x * (T{1} - s));
}

}  // namespace pom::act
