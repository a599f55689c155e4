#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "pom/aligned.hpp"

namespace pom {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "Tensor supports float and double only");
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

const char* to_string(DType dtype);
std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names every shape involved.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf appears where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major tensor. A rank-0 tensor (empty shape) holds one scalar.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : data_(1, T{0}) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), T{0}) { validate_extents(); }

    Tensor(Shape shape, const std::vector<T>& data) : Tensor(adopt(std::move(shape), {data.begin(), data.end()})) {}

    /// Takes ownership of an aligned buffer without copying.
    static Tensor adopt(Shape shape, AlignedVector<T> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        t.validate_extents();
        if (t.data_.size() != numel(t.shape_)) {
            throw ShapeError("tensor data length " + std::to_string(t.data_.size()) + " does not match shape " +
                             to_string(t.shape_));
        }
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor scalar(T value) { return adopt(Shape{}, AlignedVector<T>{value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
        }
        return shape_[axis];
    }
    std::size_t size() const noexcept { return data_.size(); }
    static constexpr DType dtype() noexcept { return dtype_of<T>(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    template <typename... Idx>
    T& at(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    const T& at(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    /// Value of a one-element tensor.
    T item() const {
        if (data_.size() != 1) {
            throw ShapeError("item() requires a one-element tensor, got shape " + to_string(shape_));
        }
        return data_[0];
    }

    Tensor reshaped(Shape shape) const {
        if (numel(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + to_string(shape_) + " into " + to_string(shape));
        }
        return adopt(std::move(shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>::adopt(shape_, AlignedVector<U>(data_.begin(), data_.end()));
    }

private:
    void validate_extents() const {
        for (std::size_t e : shape_) {
            if (e == 0) {
                throw ShapeError("tensor extents must be positive, got " + to_string(shape_));
            }
        }
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) {
            throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match shape " + to_string(shape_));
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis]) {
                throw ShapeError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis) +
                                 " of shape " + to_string(shape_));
            }
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    AlignedVector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---------------------------------------------------------------------------
// Pure kernels. None of these mutate their inputs.
// ---------------------------------------------------------------------------

/// Plain 2D product a[m x k] * b[k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// y = x W^T + b over the last axis of x. w is [out x in], bias is [out] or null.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias = nullptr);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);
template <typename T>
Tensor<T> silu(const Tensor<T>& a);

/// Mean along `axis`, keeping it as an extent-1 axis.
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::size_t axis);

template <typename T>
std::vector<Tensor<T>> chunk(const Tensor<T>& x, std::size_t parts, std::size_t axis);
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

/// Affine-free layer norm over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps);

template <typename T>
T sum_all(const Tensor<T>& x);

template <typename T>
bool all_finite(const Tensor<T>& x);

/// Throws NumericError naming `context` if any element is NaN/Inf.
template <typename T>
void require_finite(const Tensor<T>& x, const std::string& context);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace pom
