#include "pom/ops.hpp"

#include <cmath>

#include "eigen_util.hpp"
#include "vec_math.hpp"
#include "pom/activations.hpp"
#include "pom/diagnostics.hpp"

namespace pom::ops {

using detail::cmap;
using detail::mmap;

namespace {

template <typename T>
Tape<T>& tape_of(Var<T> v) {
    if (!v.tape) throw std::invalid_argument("variable is not attached to a tape");
    return *v.tape;
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
    if (a.tape != b.tape) {
        throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
    }
}

template <typename T, typename F, typename G>
Var<T> unary(const char* op, Var<T> a, F f, G dfdx) {
    return tape_of(a).apply(
        op, {a},
        [f](std::span<const Tensor<T>* const> in) {
            Tensor<T> out(in[0]->shape());
            const T* x = in[0]->raw();
            T* y = out.raw();
            for (std::size_t i = 0; i < out.size(); ++i) y[i] = f(x[i]);
            return out;
        },
        [dfdx](BackwardContext<T>& ctx) {
            const Tensor<T>& x = ctx.input(0);
            const Tensor<T>& y = ctx.output();
            const Tensor<T>& g = ctx.grad_output();
            Tensor<T> dx(x.shape());
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * dfdx(x[i], y[i]);
            ctx.accumulate(0, std::move(dx));
        });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "matmul");
    return tape_of(a).apply(
        "matmul", {a, b}, [](std::span<const Tensor<T>* const> in) { return pom::matmul(*in[0], *in[1]); },
        [](BackwardContext<T>& ctx) {
            const Tensor<T>& A = ctx.input(0);
            const Tensor<T>& B = ctx.input(1);
            const Tensor<T>& G = ctx.grad_output();
            if (ctx.needs_grad(0)) ctx.accumulate(0, pom::matmul(G, pom::transpose(B)));
            if (ctx.needs_grad(1)) ctx.accumulate(1, pom::matmul(pom::transpose(A), G));
        });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> bias) {
    require_same_tape(x, w, "linear");
    std::vector<Var<T>> inputs{x, w};
    if (bias) {
        require_same_tape(x, *bias, "linear");
        inputs.push_back(*bias);
    }
    return tape_of(x).apply(
        "linear", std::move(inputs),
        [](std::span<const Tensor<T>* const> in) {
            return pom::linear(*in[0], *in[1], in.size() > 2 ? in[2] : nullptr);
        },
        [](BackwardContext<T>& ctx) {
            const Tensor<T>& X = ctx.input(0);
            const Tensor<T>& W = ctx.input(1);
            const Tensor<T>& G = ctx.grad_output();
            const auto in = static_cast<Eigen::Index>(W.dim(1));
            const auto out = static_cast<Eigen::Index>(W.dim(0));
            const auto rows = static_cast<Eigen::Index>(X.size() / W.dim(1));
            const auto g = cmap(G.raw(), rows, out);
            if (ctx.needs_grad(0)) {
                Tensor<T> dx(X.shape());
                mmap(dx.raw(), rows, in).noalias() = g * cmap(W.raw(), out, in);
                ctx.accumulate(0, std::move(dx));
            }
            if (ctx.needs_grad(1)) {
                Tensor<T> dw(W.shape());
                mmap(dw.raw(), out, in).noalias() = g.transpose() * cmap(X.raw(), rows, in);
                ctx.accumulate(1, std::move(dw));
            }
            if (ctx.input_count() > 2 && ctx.needs_grad(2)) {
                Tensor<T> db({W.dim(0)});
                mmap(db.raw(), 1, out) = g.colwise().sum();
                ctx.accumulate(2, std::move(db));
            }
        });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "add");
    return tape_of(a).apply(
        "add", {a, b}, [](std::span<const Tensor<T>* const> in) { return pom::add(*in[0], *in[1]); },
        [](BackwardContext<T>& ctx) {
            ctx.accumulate(0, ctx.grad_output());
            ctx.accumulate(1, ctx.grad_output());
        });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "sub");
    return tape_of(a).apply(
        "sub", {a, b}, [](std::span<const Tensor<T>* const> in) { return pom::sub(*in[0], *in[1]); },
        [](BackwardContext<T>& ctx) {
            ctx.accumulate(0, ctx.grad_output());
            if (ctx.needs_grad(1)) ctx.accumulate(1, pom::scale(ctx.grad_output(), T{-1}));
        });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "mul");
    return tape_of(a).apply(
        "mul", {a, b}, [](std::span<const Tensor<T>* const> in) { return pom::mul(*in[0], *in[1]); },
        [](BackwardContext<T>& ctx) {
            if (ctx.needs_grad(0)) ctx.accumulate(0, pom::mul(ctx.grad_output(), ctx.input(1)));
            if (ctx.needs_grad(1)) ctx.accumulate(1, pom::mul(ctx.grad_output(), ctx.input(0)));
        });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
    return tape_of(a).apply(
        "scale", {a}, [factor](std::span<const Tensor<T>* const> in) { return pom::scale(*in[0], factor); },
        [factor](BackwardContext<T>& ctx) { ctx.accumulate(0, pom::scale(ctx.grad_output(), factor)); });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T value) {
    return tape_of(a).apply(
        "add_scalar", {a}, [value](std::span<const Tensor<T>* const> in) { return pom::add_scalar(*in[0], value); },
        [](BackwardContext<T>& ctx) { ctx.accumulate(0, ctx.grad_output()); });
}

template <typename T>
Var<T> add_row_vector(Var<T> x, Var<T> v) {
    require_same_tape(x, v, "add_row_vector");
    return tape_of(x).apply(
        "add_row_vector", {x, v},
        [](std::span<const Tensor<T>* const> in) {
            const Tensor<T>& X = *in[0];
            const Tensor<T>& V = *in[1];
            if (X.rank() == 0 || V.rank() != 1 || V.dim(0) != X.shape().back()) {
                throw ShapeError("add_row_vector: " + to_string(X.shape()) + " and " + to_string(V.shape()));
            }
            Tensor<T> out = X;
            const std::size_t d = V.dim(0);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += V[i % d];
            return out;
        },
        [](BackwardContext<T>& ctx) {
            const Tensor<T>& G = ctx.grad_output();
            ctx.accumulate(0, G);
            if (ctx.needs_grad(1)) {
                const std::size_t d = ctx.input(1).dim(0);
                Tensor<T> dv({d});
                for (std::size_t i = 0; i < G.size(); ++i) dv[i % d] += G[i];
                ctx.accumulate(1, std::move(dv));
            }
        });
}

namespace {

// Activation node: forward through Tensor kernel `f`, derivative array from
// `grad(x, y, d, n)`.
template <typename T, typename G>
Var<T> activation(const char* op, Var<T> a, Tensor<T> (*f)(const Tensor<T>&), G grad) {
    return tape_of(a).apply(
        op, {a}, [f](std::span<const Tensor<T>* const> in) { return f(*in[0]); },
        [grad](BackwardContext<T>& ctx) {
            const Tensor<T>& x = ctx.input(0);
            Tensor<T> dx(x.shape());
            grad(x.raw(), ctx.output().raw(), dx.raw(), x.size());
            const T* g = ctx.grad_output().raw();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= g[i];
            ctx.accumulate(0, std::move(dx));
        });
}

}  // namespace

template <typename T>
Var<T> sigmoid(Var<T> a) {
    return activation<T>("sigmoid", a, &pom::sigmoid<T>, [](const T*, const T* y, T* d, std::size_t n) {
        const bool fault = diag::fault_active(diag::Fault::sigmoid_backward_off);
        for (std::size_t i = 0; i < n; ++i) d[i] = fault ? y[i] : act::sigmoid_grad_from_output(y[i]);
    });
}

template <typename T>
Var<T> gelu(Var<T> a) {
    return activation<T>("gelu", a, &pom::gelu<T>,
                         [](const T* x, const T*, T* d, std::size_t n) { detail::gelu_grad_n(x, d, n); });
}

template <typename T>
Var<T> silu(Var<T> a) {
    return activation<T>("silu", a, &pom::silu<T>,
                         [](const T* x, const T*, T* d, std::size_t n) { detail::silu_grad_n(x, d, n); });
}

template <typename T>
Var<T> identity(Var<T> a) {
    return unary<T>("identity", a, [](T x) { return x; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> scale_shift(Var<T> x, Var<T> scale, std::optional<Var<T>> shift, T offset) {
    require_same_tape(x, scale, "scale_shift");
    std::vector<Var<T>> inputs{x, scale};
    if (shift) {
        require_same_tape(x, *shift, "scale_shift");
        inputs.push_back(*shift);
    }
    return tape_of(x).apply(
        "scale_shift", std::move(inputs),
        [offset](std::span<const Tensor<T>* const> in) {
            const Tensor<T>& X = *in[0];
            const Tensor<T>& S = *in[1];
            const Tensor<T>* B = in.size() > 2 ? in[2] : nullptr;
            if (X.rank() != 3 || S.rank() != 2 || S.dim(0) != X.dim(0) || S.dim(1) != X.dim(2) ||
                (B && B->shape() != S.shape())) {
                throw ShapeError("scale_shift: x " + to_string(X.shape()) + ", scale " + to_string(S.shape()) +
                                 (B ? ", shift " + to_string(B->shape()) : std::string()));
            }
            const std::size_t nb = X.dim(0), n = X.dim(1), d = X.dim(2);
            Tensor<T> out(X.shape());
            for (std::size_t b = 0; b < nb; ++b) {
                const T* s = S.raw() + b * d;
                const T* sh = B ? B->raw() + b * d : nullptr;
                for (std::size_t i = 0; i < n; ++i) {
                    const T* xr = X.raw() + (b * n + i) * d;
                    T* o = out.raw() + (b * n + i) * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        o[j] = xr[j] * (offset + s[j]);
                        if (sh) o[j] += sh[j];
                    }
                }
            }
            return out;
        },
        [offset](BackwardContext<T>& ctx) {
            const Tensor<T>& X = ctx.input(0);
            const Tensor<T>& S = ctx.input(1);
            const Tensor<T>& G = ctx.grad_output();
            const std::size_t nb = X.dim(0), n = X.dim(1), d = X.dim(2);
            const bool has_shift = ctx.input_count() > 2;
            Tensor<T> dx(X.shape());
            Tensor<T> ds(S.shape());
            Tensor<T> dsh(S.shape());
            for (std::size_t b = 0; b < nb; ++b) {
                const T* s = S.raw() + b * d;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t row = (b * n + i) * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const T g = G[row + j];
                        dx[row + j] = g * (offset + s[j]);
                        ds[b * d + j] += g * X[row + j];
                        dsh[b * d + j] += g;
                    }
                }
            }
            ctx.accumulate(0, std::move(dx));
            ctx.accumulate(1, std::move(ds));
            if (has_shift) ctx.accumulate(2, std::move(dsh));
        });
}

template <typename T>
Var<T> reduce_mean(Var<T> x, std::size_t axis) {
    return tape_of(x).apply(
        "reduce_mean", {x}, [axis](std::span<const Tensor<T>* const> in) { return pom::reduce_mean(*in[0], axis); },
        [axis](BackwardContext<T>& ctx) {
            const Tensor<T>& X = ctx.input(0);
            const Tensor<T>& G = ctx.grad_output();
            std::size_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= X.dim(i);
            for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.dim(i);
            const std::size_t extent = X.dim(axis);
            const T inv = T{1} / static_cast<T>(extent);
            Tensor<T> dx(X.shape());
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t e = 0; e < extent; ++e)
                    for (std::size_t i = 0; i < inner; ++i)
                        dx[(o * extent + e) * inner + i] = G[o * inner + i] * inv;
            ctx.accumulate(0, std::move(dx));
        });
}

template <typename T>
Var<T> sum(Var<T> x) {
    return tape_of(x).apply(
        "sum", {x}, [](std::span<const Tensor<T>* const> in) { return Tensor<T>::scalar(pom::sum_all(*in[0])); },
        [](BackwardContext<T>& ctx) {
            ctx.accumulate(0, Tensor<T>::full(ctx.input(0).shape(), ctx.grad_output().item()));
        });
}

template <typename T>
Var<T> mean(Var<T> x) {
    return tape_of(x).apply(
        "mean", {x},
        [](std::span<const Tensor<T>* const> in) {
            return Tensor<T>::scalar(pom::sum_all(*in[0]) / static_cast<T>(in[0]->size()));
        },
        [](BackwardContext<T>& ctx) {
            const T g = ctx.grad_output().item() / static_cast<T>(ctx.input(0).size());
            ctx.accumulate(0, Tensor<T>::full(ctx.input(0).shape(), g));
        });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "mse");
    return tape_of(a).apply(
        "mse", {a, b},
        [](std::span<const Tensor<T>* const> in) {
            const Tensor<T>& A = *in[0];
            const Tensor<T>& B = *in[1];
            if (A.shape() != B.shape()) {
                throw ShapeError("mse: shape mismatch " + to_string(A.shape()) + " vs " + to_string(B.shape()));
            }
            T acc = 0;
            for (std::size_t i = 0; i < A.size(); ++i) acc += (A[i] - B[i]) * (A[i] - B[i]);
            return Tensor<T>::scalar(acc / static_cast<T>(A.size()));
        },
        [](BackwardContext<T>& ctx) {
            const Tensor<T>& A = ctx.input(0);
            const Tensor<T>& B = ctx.input(1);
            const T k = T{2} * ctx.grad_output().item() / static_cast<T>(A.size());
            Tensor<T> da(A.shape());
            for (std::size_t i = 0; i < A.size(); ++i) da[i] = k * (A[i] - B[i]);
            if (ctx.needs_grad(1)) ctx.accumulate(1, pom::scale(da, T{-1}));
            ctx.accumulate(0, std::move(da));
        });
}

template <typename T>
std::vector<Var<T>> chunk(Var<T> x, std::size_t parts, std::size_t axis) {
    const Shape shape = x.shape();
    if (axis >= shape.size() || parts == 0 || shape[axis] % parts != 0) {
        throw ShapeError("chunk: cannot split shape " + to_string(shape) + " into " + std::to_string(parts) +
                         " parts along axis " + std::to_string(axis));
    }
    std::vector<Var<T>> out;
    out.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        out.push_back(tape_of(x).apply(
            "chunk", {x},
            [parts, axis, p](std::span<const Tensor<T>* const> in) {
                return std::move(pom::chunk(*in[0], parts, axis)[p]);
            },
            [parts, axis, p](BackwardContext<T>& ctx) {
                const Tensor<T>& X = ctx.input(0);
                std::vector<Tensor<T>> pieces;
                pieces.reserve(parts);
                Shape piece_shape = X.shape();
                piece_shape[axis] /= parts;
                for (std::size_t q = 0; q < parts; ++q) {
                    pieces.push_back(q == p ? ctx.grad_output() : Tensor<T>::zeros(piece_shape));
                }
                ctx.accumulate(0, pom::concat<T>(pieces, axis));
            }));
    }
    return out;
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    for (const auto& p : parts) require_same_tape(parts[0], p, "concat");
    return tape_of(parts[0]).apply(
        "concat", parts,
        [axis](std::span<const Tensor<T>* const> in) {
            std::vector<Tensor<T>> vals;
            vals.reserve(in.size());
            for (const Tensor<T>* t : in) vals.push_back(*t);
            return pom::concat<T>(vals, axis);
        },
        [axis](BackwardContext<T>& ctx) {
            std::vector<std::size_t> extents;
            for (std::size_t i = 0; i < ctx.input_count(); ++i) extents.push_back(ctx.input(i).dim(axis));
            const Tensor<T>& G = ctx.grad_output();
            std::size_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= G.dim(i);
            for (std::size_t i = axis + 1; i < G.rank(); ++i) inner *= G.dim(i);
            const std::size_t total = G.dim(axis);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < extents.size(); ++k) {
                if (ctx.needs_grad(k)) {
                    Tensor<T> g(ctx.input(k).shape());
                    for (std::size_t o = 0; o < outer; ++o)
                        std::copy_n(G.raw() + (o * total + offset) * inner, extents[k] * inner,
                                    g.raw() + o * extents[k] * inner);
                    ctx.accumulate(k, std::move(g));
                }
                offset += extents[k];
            }
        });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
    return tape_of(x).apply(
        "reshape", {x}, [shape](std::span<const Tensor<T>* const> in) { return in[0]->reshaped(shape); },
        [](BackwardContext<T>& ctx) { ctx.accumulate(0, ctx.grad_output().reshaped(ctx.input(0).shape())); });
}

template <typename T>
Var<T> layer_norm(Var<T> x, T eps) {
    return tape_of(x).apply(
        "layer_norm", {x}, [eps](std::span<const Tensor<T>* const> in) { return pom::layer_norm(*in[0], eps); },
        [eps](BackwardContext<T>& ctx) {
            const Tensor<T>& X = ctx.input(0);
            const Tensor<T>& Y = ctx.output();
            const Tensor<T>& G = ctx.grad_output();
            const std::size_t d = X.shape().back();
            const std::size_t rows = X.size() / d;
            Tensor<T> dx(X.shape());
            for (std::size_t r = 0; r < rows; ++r) {
                const T* x = X.raw() + r * d;
                const T* y = Y.raw() + r * d;
                const T* g = G.raw() + r * d;
                T mean = 0;
                for (std::size_t i = 0; i < d; ++i) mean += x[i];
                mean /= static_cast<T>(d);
                T var = 0;
                for (std::size_t i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
                var /= static_cast<T>(d);
                const T inv = T{1} / std::sqrt(var + eps);
                T gmean = 0, gy = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    gmean += g[i];
                    gy += g[i] * y[i];
                }
                gmean /= static_cast<T>(d);
                gy /= static_cast<T>(d);
                T* o = dx.raw() + r * d;
                for (std::size_t i = 0; i < d; ++i) o[i] = inv * (g[i] - gmean - y[i] * gy);
            }
            ctx.accumulate(0, std::move(dx));
        });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> indices) {
    return tape_of(table).apply(
        "gather_rows", {table},
        [indices](std::span<const Tensor<T>* const> in) {
            const Tensor<T>& W = *in[0];
            if (W.rank() != 2) throw ShapeError("gather_rows: table must be rank 2, got " + to_string(W.shape()));
            const std::size_t d = W.dim(1);
            Tensor<T> out({indices.size(), d});
            for (std::size_t r = 0; r < indices.size(); ++r) {
                if (indices[r] >= W.dim(0)) {
                    throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range for table " +
                                     to_string(W.shape()));
                }
                std::copy_n(W.raw() + indices[r] * d, d, out.raw() + r * d);
            }
            return out;
        },
        [indices](BackwardContext<T>& ctx) {
            const Tensor<T>& G = ctx.grad_output();
            Tensor<T> dw(ctx.input(0).shape());
            const std::size_t d = dw.dim(1);
            for (std::size_t r = 0; r < indices.size(); ++r)
                for (std::size_t j = 0; j < d; ++j) dw[indices[r] * d + j] += G[r * d + j];
            ctx.accumulate(0, std::move(dw));
        });
}

#define POM_INSTANTIATE(T)                                                                      \
    template Var<T> matmul(Var<T>, Var<T>);                                                     \
    template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                              \
    template Var<T> add(Var<T>, Var<T>);                                                        \
    template Var<T> sub(Var<T>, Var<T>);                                                        \
    template Var<T> mul(Var<T>, Var<T>);                                                        \
    template Var<T> scale(Var<T>, T);                                                           \
    template Var<T> add_scalar(Var<T>, T);                                                      \
    template Var<T> add_row_vector(Var<T>, Var<T>);                                             \
    template Var<T> sigmoid(Var<T>);                                                            \
    template Var<T> gelu(Var<T>);                                                               \
    template Var<T> silu(Var<T>);                                                               \
    template Var<T> identity(Var<T>);                                                           \
    template Var<T> scale_shift(Var<T>, Var<T>, std::optional<Var<T>>, T);                      \
    template Var<T> reduce_mean(Var<T>, std::size_t);                                           \
    template Var<T> sum(Var<T>);                                                                \
    template Var<T> mean(Var<T>);                                                               \
    template Var<T> mse(Var<T>, Var<T>);                                                        \
    template std::vector<Var<T>> chunk(Var<T>, std::size_t, std::size_t);                       \
    template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                            \
    template Var<T> reshape(Var<T>, Shape);                                                     \
    template Var<T> layer_norm(Var<T>, T);                                                      \
    template Var<T> gather_rows(Var<T>, std::vector<std::size_t>);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom::ops
