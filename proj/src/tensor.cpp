#include "pom/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "eigen_util.hpp"
#include "vec_math.hpp"
#include "pom/activations.hpp"

namespace pom {

using detail::cmap;
using detail::mmap;

const char* to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& a, F f) {
    Tensor<T> out(a.shape());
    const T* src = a.raw();
    T* dst = out.raw();
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <typename T, typename F>
Tensor<T> map_binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Tensor<T> out(a.shape());
    const T* pa = a.raw();
    const T* pb = b.raw();
    T* dst = out.raw();
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(pa[i], pb[i]);
    return out;
}

// (outer, extent, inner) factorisation of a shape around `axis`.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    Tensor<T> out({a.dim(0), b.dim(1)});
    mmap(out.raw(), m, n).noalias() = cmap(a.raw(), m, k) * cmap(b.raw(), k, n);
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) {
        throw ShapeError("transpose: expected rank 2, got " + to_string(a.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto n = static_cast<Eigen::Index>(a.dim(1));
    Tensor<T> out({a.dim(1), a.dim(0)});
    mmap(out.raw(), n, m) = cmap(a.raw(), m, n).transpose();
    return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
    if (x.rank() == 0 || w.rank() != 2 || x.shape().back() != w.dim(1)) {
        throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " + to_string(w.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != w.dim(0))) {
        throw ShapeError("linear: bias " + to_string(bias->shape()) + " incompatible with weight " +
                         to_string(w.shape()));
    }
    const std::size_t in = w.dim(1);
    const std::size_t outf = w.dim(0);
    const std::size_t rows = x.size() / in;
    Shape shape = x.shape();
    shape.back() = outf;
    Tensor<T> out(shape);
    auto y = mmap(out.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(outf));
    y.noalias() = cmap(x.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(in)) *
                  cmap(w.raw(), static_cast<Eigen::Index>(outf), static_cast<Eigen::Index>(in)).transpose();
    if (bias) {
        y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->raw(), static_cast<Eigen::Index>(outf));
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return map_binary(a, b, "add", [](T x, T y) { return x + y; });
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return map_binary(a, b, "sub", [](T x, T y) { return x - y; });
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return map_binary(a, b, "mul", [](T x, T y) { return x * y; });
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return map_unary(a, [factor](T x) { return x * factor; });
}
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    return map_unary(a, [value](T x) { return x + value; });
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    detail::sigmoid_n(a.raw(), out.raw(), a.size());
    return out;
}
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    detail::gelu_n(a.raw(), out.raw(), a.size());
    return out;
}
template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    detail::silu_n(a.raw(), out.raw(), a.size());
    return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis);
    Shape shape = x.shape();
    shape[axis] = 1;
    Tensor<T> out(shape);
    const T* src = x.raw();
    T* dst = out.raw();
    for (std::size_t o = 0; o < s.outer; ++o) {
        T* row = dst + o * s.inner;
        for (std::size_t e = 0; e < s.extent; ++e) {
            const T* in = src + (o * s.extent + e) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) row[i] += in[i];
        }
    }
    return out;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, std::size_t axis) {
    Tensor<T> out = reduce_sum(x, axis);
    const T inv = T{1} / static_cast<T>(x.dim(axis));
    for (T& v : out.data()) v *= inv;
    return out;
}

template <typename T>
std::vector<Tensor<T>> chunk(const Tensor<T>& x, std::size_t parts, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis);
    if (parts == 0 || s.extent % parts != 0) {
        throw ShapeError("chunk: extent " + std::to_string(s.extent) + " of axis " + std::to_string(axis) +
                         " in shape " + to_string(x.shape()) + " is not divisible by " + std::to_string(parts));
    }
    const std::size_t piece = s.extent / parts;
    Shape shape = x.shape();
    shape[axis] = piece;
    std::vector<Tensor<T>> out;
    out.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        Tensor<T> t(shape);
        for (std::size_t o = 0; o < s.outer; ++o) {
            const T* src = x.raw() + (o * s.extent + p * piece) * s.inner;
            std::memcpy(t.raw() + o * piece * s.inner, src, piece * s.inner * sizeof(T));
        }
        out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
    if (parts.empty()) {
        throw ShapeError("concat: no parts");
    }
    const Shape& ref = parts[0].shape();
    std::size_t extent = 0;
    for (const auto& p : parts) {
        if (p.rank() != ref.size()) {
            throw ShapeError("concat: rank mismatch " + to_string(ref) + " vs " + to_string(p.shape()));
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (i != axis && p.shape()[i] != ref[i]) {
                throw ShapeError("concat: shape mismatch " + to_string(ref) + " vs " + to_string(p.shape()) +
                                 " along axis " + std::to_string(axis));
            }
        }
        extent += p.dim(axis);
    }
    Shape shape = ref;
    shape[axis] = extent;
    Tensor<T> out(shape);
    const AxisSplit s = split_axis(shape, axis);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t e = p.dim(axis);
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::memcpy(out.raw() + (o * s.extent + offset) * s.inner, p.raw() + o * e * s.inner,
                        e * s.inner * sizeof(T));
        }
        offset += e;
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps) {
    if (x.rank() == 0) {
        throw ShapeError("layer_norm: scalar input");
    }
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.size() / d;
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.raw() + r * d;
        T* o = out.raw() + r * d;
        T mean = 0;
        for (std::size_t i = 0; i < d; ++i) mean += in[i];
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
        var /= static_cast<T>(d);
        const T inv = T{1} / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) o[i] = (in[i] - mean) * inv;
    }
    return out;
}

template <typename T>
T sum_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.data()) s += v;
    return s;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
    // x - x is exactly 0 for finite x and NaN otherwise; the sum vectorizes.
    const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> a(x.raw(), static_cast<Eigen::Index>(x.size()));
    return (a - a).sum() == T{0};
}

template <typename T>
void require_finite(const Tensor<T>& x, const std::string& context) {
    if (all_finite(x)) return;
    const auto data = x.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw NumericError(context + ": non-finite value " + std::to_string(data[i]) + " at flat index " +
                               std::to_string(i) + " of tensor " + to_string(x.shape()));
        }
    }
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() && std::memcmp(a.raw(), b.raw(), a.size() * sizeof(T)) == 0;
}

#define POM_INSTANTIATE(T)                                                                  \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> transpose(const Tensor<T>&);                                         \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> scale(const Tensor<T>&, T);                                          \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                     \
    template Tensor<T> sigmoid(const Tensor<T>&);                                           \
    template Tensor<T> gelu(const Tensor<T>&);                                              \
    template Tensor<T> silu(const Tensor<T>&);                                              \
    template Tensor<T> reduce_mean(const Tensor<T>&, std::size_t);                          \
    template Tensor<T> reduce_sum(const Tensor<T>&, std::size_t);                           \
    template std::vector<Tensor<T>> chunk(const Tensor<T>&, std::size_t, std::size_t);      \
    template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                     \
    template Tensor<T> layer_norm(const Tensor<T>&, T);                                     \
    template T sum_all(const Tensor<T>&);                                                   \
    template bool all_finite(const Tensor<T>&);                                             \
    template void require_finite(const Tensor<T>&, const std::string&);                     \
    template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);                            \
    template bool bitwise_equal(const Tensor<T>&, const Tensor<T>&);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom
