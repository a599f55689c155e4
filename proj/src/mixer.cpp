#include "pom/mixer.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pom/activations.hpp"
#include "pom/diagnostics.hpp"
#include "pom/ops.hpp"
#include "vec_math.hpp"

namespace pom {

void PoMConfig::validate() const {
    if (dim == 0) throw std::invalid_argument("PoM: model dim must be positive");
    if (degree == 0) throw std::invalid_argument("PoM: degree must be >= 1");
    if (expand == 0) throw std::invalid_argument("PoM: expansion factor must be >= 1");
}

template <typename T>
std::size_t PoMParams<T>::parameter_count() const {
    std::size_t n = 0;
    visit([&](const char*, const Tensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
void PoMParams<T>::validate() const {
    config.validate();
    const std::size_t d = config.dim;
    const std::size_t kd = config.state_dim();
    auto expect = [](const Tensor<T>& t, const Shape& s, const char* name) {
        if (t.shape() != s) {
            throw ShapeError(std::string("PoM parameter ") + name + " has shape " + to_string(t.shape()) +
                             ", expected " + to_string(s));
        }
        require_finite(t, std::string("PoM parameter ") + name);
    };
    expect(w_poly, {kd, d}, "w_poly");
    expect(w_sel, {kd, d}, "w_sel");
    expect(w_out, {d, kd}, "w_out");
    if (config.bias) {
        expect(b_poly, {kd}, "b_poly");
        expect(b_sel, {kd}, "b_sel");
        expect(b_out, {d}, "b_out");
    }
}

template <typename T>
PoMParams<T> init_pom(const PoMConfig& config, Rng& rng, double weight_std) {
    config.validate();
    const std::size_t d = config.dim;
    const std::size_t kd = config.state_dim();
    PoMParams<T> p;
    p.config = config;
    p.w_poly = rng.normal_tensor<T>({kd, d}, weight_std);
    p.b_poly = Tensor<T>::zeros({kd});
    p.w_sel = rng.normal_tensor<T>({kd, d}, weight_std);
    p.b_sel = Tensor<T>::zeros({kd});
    p.w_out = rng.normal_tensor<T>({d, kd}, weight_std);
    p.b_out = Tensor<T>::zeros({d});
    return p;
}

namespace {

template <typename T>
void activate_n(const T* x, T* y, std::size_t n, Activation a) {
    if (a == Activation::gelu) {
        detail::gelu_n(x, y, n);
    } else if (x != y) {
        std::copy(x, x + n, y);
    }
}

std::size_t chunk_width(std::size_t last, std::size_t degree, const Shape& shape) {
    if (degree == 0 || last % degree != 0) {
        throw ShapeError("polynomial expansion: last extent of " + to_string(shape) + " is not divisible by degree " +
                         std::to_string(degree));
    }
    return last / degree;
}

// Split into k chunks, activate, then chunk_m := chunk_m ∘ chunk_{m-1}.
template <typename T>
Tensor<T> expand_general(const Tensor<T>& p, std::size_t degree, Activation a) {
    const std::size_t width = p.shape().back();
    const std::size_t w = chunk_width(width, degree, p.shape());
    const std::size_t rows = p.size() / width;
    Tensor<T> out(p.shape());
    T* dst = out.raw();
    activate_n(p.raw(), dst, p.size(), a);
    for (std::size_t m = 1; m < degree; ++m) {
        for (std::size_t r = 0; r < rows; ++r) {
            T* cur = dst + r * width + m * w;
            const T* prev = dst + r * width + (m - 1) * w;
            for (std::size_t j = 0; j < w; ++j) cur[j] = cur[j] * prev[j];
        }
    }
    return out;
}

template <typename T, std::size_t K>
Tensor<T> expand_fixed(const Tensor<T>& p, Activation a) {
    const std::size_t width = p.shape().back();
    const std::size_t w = chunk_width(width, K, p.shape());
    const std::size_t rows = p.size() / width;
    Tensor<T> out(p.shape());
    activate_n(p.raw(), out.raw(), p.size(), a);
    for (std::size_t r = 0; r < rows; ++r) {
        T* dst = out.raw() + r * width;
        for (std::size_t j = 0; j < w; ++j) {
            T c = dst[j];
            for (std::size_t m = 1; m < K; ++m) {
                c = dst[m * w + j] * c;
                dst[m * w + j] = c;
            }
        }
    }
    return out;
}

void check_input_dim(const Shape& shape, std::size_t d, const char* what) {
    if (shape.size() != 3 || shape[2] != d) {
        throw ShapeError(std::string(what) + ": expected [batch x n x " + std::to_string(d) + "], got " +
                         to_string(shape));
    }
}

template <typename T>
const Tensor<T>* bias_or_null(const PoMParams<T>& p, const Tensor<T>& b) {
    return p.config.bias ? &b : nullptr;
}

template <typename T>
std::optional<Var<T>> bias_var(ParamScope<T>& scope, const PoMParams<T>& p, const Tensor<T>& b) {
    if (!p.config.bias) return std::nullopt;
    return scope(b);
}

template <typename T>
T denominator(std::size_t count) {
    return static_cast<T>(kMixEpsilon) + static_cast<T>(count);
}

template <typename T>
Tensor<T> mix_forward(const Tensor<T>& f, const MaskSpec& mask, bool normalize) {
    if (f.rank() != 3) {
        throw ShapeError("mix: features must be [batch x n x width], got " + to_string(f.shape()));
    }
    const std::size_t nb = f.dim(0), n = f.dim(1), w = f.dim(2);
    std::uint64_t empty = 0;
    switch (mask.kind()) {
        case MaskSpec::Kind::none: {
            Tensor<T> out({nb, 1, w});
            for (std::size_t b = 0; b < nb; ++b) {
                T* acc = out.raw() + b * w;
                for (std::size_t j = 0; j < n; ++j) {
                    const T* src = f.raw() + (b * n + j) * w;
                    for (std::size_t c = 0; c < w; ++c) acc[c] += src[c];
                }
                if (normalize) {
                    const T cnt = static_cast<T>(n);
                    for (std::size_t c = 0; c < w; ++c) acc[c] /= cnt;
                }
            }
            return out;
        }
        case MaskSpec::Kind::padding: {
            mask.validate(nb, 1, n);
            Tensor<T> out({nb, 1, w});
            for (std::size_t b = 0; b < nb; ++b) {
                T* acc = out.raw() + b * w;
                std::size_t count = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (!mask.visible(b, 0, j, n)) continue;
                    ++count;
                    const T* src = f.raw() + (b * n + j) * w;
                    for (std::size_t c = 0; c < w; ++c) acc[c] += src[c];
                }
                if (count == 0) {
                    ++empty;
                } else if (normalize) {
                    const T cnt = static_cast<T>(count);
                    for (std::size_t c = 0; c < w; ++c) acc[c] /= cnt;
                }
            }
            diag::note_empty_rows(empty);
            return out;
        }
        case MaskSpec::Kind::causal:
        case MaskSpec::Kind::block_causal: {
            Tensor<T> out({nb, n, w});
            std::vector<T> running(w);
            for (std::size_t b = 0; b < nb; ++b) {
                std::fill(running.begin(), running.end(), T{0});
                std::size_t absorbed = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t upto = mask.visible_prefix(i, n);
                    for (; absorbed < upto; ++absorbed) {
                        const T* src = f.raw() + (b * n + absorbed) * w;
                        for (std::size_t c = 0; c < w; ++c) running[c] += src[c];
                    }
                    T* dst = out.raw() + (b * n + i) * w;
                    if (normalize) {
                        const T den = denominator<T>(upto);
                        for (std::size_t c = 0; c < w; ++c) dst[c] = running[c] / den;
                    } else {
                        std::copy(running.begin(), running.end(), dst);
                    }
                }
            }
            return out;
        }
        case MaskSpec::Kind::full:
            break;
    }
    // Full mask: explicit per-query sums in context order.
    const std::size_t m = mask.full_queries();
    mask.validate(nb, m, n);
    Tensor<T> out({nb, m, w});
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < m; ++i) {
            T* dst = out.raw() + (b * m + i) * w;
            std::size_t count = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask.visible(b, i, j, n)) continue;
                ++count;
                const T* src = f.raw() + (b * n + j) * w;
                for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
            }
            if (count == 0) ++empty;
            if (normalize) {
                const T den = denominator<T>(count);
                for (std::size_t c = 0; c < w; ++c) dst[c] /= den;
            }
        }
    }
    diag::note_empty_rows(empty);
    return out;
}

template <typename T>
Tensor<T> mix_backward(const Tensor<T>& f, const Tensor<T>& g, const MaskSpec& mask, bool normalize) {
    const std::size_t nb = f.dim(0), n = f.dim(1), w = f.dim(2);
    Tensor<T> df(f.shape());
    switch (mask.kind()) {
        case MaskSpec::Kind::none:
        case MaskSpec::Kind::padding: {
            for (std::size_t b = 0; b < nb; ++b) {
                std::size_t count = 0;
                for (std::size_t j = 0; j < n; ++j) count += mask.visible(b, 0, j, n) ? 1 : 0;
                if (count == 0) continue;
                const T* gb = g.raw() + b * w;
                for (std::size_t j = 0; j < n; ++j) {
                    if (!mask.visible(b, 0, j, n)) continue;
                    T* dst = df.raw() + (b * n + j) * w;
                    for (std::size_t c = 0; c < w; ++c) {
                        dst[c] = normalize ? gb[c] / static_cast<T>(count) : gb[c];
                    }
                }
            }
            return df;
        }
        case MaskSpec::Kind::causal:
        case MaskSpec::Kind::block_causal: {
            // Token j receives the scaled gradients of every query whose
            // visible prefix covers it; those queries form a suffix.
            std::vector<T> suffix(w);
            for (std::size_t b = 0; b < nb; ++b) {
                std::fill(suffix.begin(), suffix.end(), T{0});
                std::size_t next_query = n;  // suffix currently covers queries [next_query, n)
                for (std::size_t jj = n; jj-- > 0;) {
                    while (next_query > 0 && mask.visible_prefix(next_query - 1, n) > jj) {
                        --next_query;
                        const T* gi = g.raw() + (b * n + next_query) * w;
                        const T den = normalize ? denominator<T>(mask.visible_prefix(next_query, n)) : T{1};
                        for (std::size_t c = 0; c < w; ++c) suffix[c] += gi[c] / den;
                    }
                    std::copy(suffix.begin(), suffix.end(), df.raw() + (b * n + jj) * w);
                }
            }
            return df;
        }
        case MaskSpec::Kind::full: {
            const std::size_t m = g.dim(1);
            for (std::size_t b = 0; b < nb; ++b) {
                for (std::size_t i = 0; i < m; ++i) {
                    std::size_t count = 0;
                    for (std::size_t j = 0; j < n; ++j) count += mask.visible(b, i, j, n) ? 1 : 0;
                    const T den = normalize ? denominator<T>(count) : T{1};
                    const T* gi = g.raw() + (b * m + i) * w;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (!mask.visible(b, i, j, n)) continue;
                        T* dst = df.raw() + (b * n + j) * w;
                        for (std::size_t c = 0; c < w; ++c) dst[c] += gi[c] / den;
                    }
                }
            }
            return df;
        }
    }
    return df;
}

template <typename T>
void check_gate_shapes(const Tensor<T>& s, const Tensor<T>& state) {
    if (s.rank() != 3 || state.rank() != 3 || s.dim(0) != state.dim(0) || s.dim(2) != state.dim(2) ||
        (state.dim(1) != 1 && state.dim(1) != s.dim(1))) {
        throw ShapeError("select: state " + to_string(state.shape()) + " must have 1 or " +
                         std::to_string(s.rank() == 3 ? s.dim(1) : 0) + " rows to match queries " +
                         to_string(s.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> expand_features(const Tensor<T>& projected, std::size_t degree, Activation activation, ExpandPath path) {
    if (projected.rank() == 0) throw ShapeError("polynomial expansion: scalar input");
    const bool fixed = degree >= 2 && degree <= 4;
    if (path == ExpandPath::specialized && !fixed) {
        throw std::invalid_argument("polynomial expansion: no specialized path for degree " + std::to_string(degree));
    }
    if (path == ExpandPath::general || !fixed) return expand_general(projected, degree, activation);
    switch (degree) {
        case 2:
            return expand_fixed<T, 2>(projected, activation);
        case 3:
            return expand_fixed<T, 3>(projected, activation);
        default:
            return expand_fixed<T, 4>(projected, activation);
    }
}

template <typename T>
Tensor<T> expand_features_backward(const Tensor<T>& projected, const Tensor<T>& grad_out, std::size_t degree,
                                   Activation activation) {
    const std::size_t width = projected.shape().back();
    const std::size_t w = chunk_width(width, degree, projected.shape());
    const std::size_t rows = projected.size() / width;
    Tensor<T> grad(projected.shape());
    // Per row: activations h, derivatives h', cumulative products c.
    AlignedVector<T> h(width), dh(width), c(width), carry(w);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = projected.raw() + r * width;
        const T* g = grad_out.raw() + r * width;
        T* dp = grad.raw() + r * width;
        if (activation == Activation::gelu) {
            detail::gelu_with_grad_n(p, h.data(), dh.data(), width);
        } else {
            std::copy(p, p + width, h.begin());
            std::fill(dh.begin(), dh.end(), T{1});
        }
        std::copy(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(w), c.begin());
        for (std::size_t m = 1; m < degree; ++m) {
            for (std::size_t j = 0; j < w; ++j) c[m * w + j] = h[m * w + j] * c[(m - 1) * w + j];
        }
        std::fill(carry.begin(), carry.end(), T{0});
        for (std::size_t m = degree; m-- > 1;) {
            for (std::size_t j = 0; j < w; ++j) {
                const T total = g[m * w + j] + carry[j];
                carry[j] = total * h[m * w + j];
                dp[m * w + j] = total * c[(m - 1) * w + j] * dh[m * w + j];
            }
        }
        for (std::size_t j = 0; j < w; ++j) dp[j] = (g[j] + carry[j]) * dh[j];
    }
    return grad;
}

template <typename T>
Tensor<T> polynomial_expand(const Tensor<T>& xc, const PoMParams<T>& params, ExpandPath path) {
    check_input_dim(xc.shape(), params.config.dim, "polynomial_expand");
    const Tensor<T> projected = linear(xc, params.w_poly, bias_or_null(params, params.b_poly));
    return expand_features(projected, params.config.degree, params.config.activation, path);
}

template <typename T>
Tensor<T> mix(const Tensor<T>& features, const MaskSpec& mask, bool normalize) {
    return mix_forward(features, mask, normalize);
}

template <typename T>
Tensor<T> gate_state(const Tensor<T>& s, const Tensor<T>& state) {
    check_gate_shapes(s, state);
    const std::size_t nb = s.dim(0), n = s.dim(1), w = s.dim(2);
    const bool shared = state.dim(1) == 1;
    const bool flip = diag::fault_active(diag::Fault::select_sign_flip);
    Tensor<T> out = sigmoid(s);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            const T* hr = state.raw() + (shared ? b : b * n + i) * w;
            T* o = out.raw() + (b * n + i) * w;
            for (std::size_t c = 0; c < w; ++c) o[c] *= hr[c];
            if (flip && i == 0) {
                for (std::size_t c = 0; c < w; ++c) o[c] = -o[c];
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> select(const Tensor<T>& xq, const PoMParams<T>& params, const Tensor<T>& state) {
    check_input_dim(xq.shape(), params.config.dim, "select");
    const Tensor<T> s = linear(xq, params.w_sel, bias_or_null(params, params.b_sel));
    return linear(gate_state(s, state), params.w_out, bias_or_null(params, params.b_out));
}

template <typename T>
Tensor<T> pom_forward(const Tensor<T>& xq, const Tensor<T>* xc, const PoMParams<T>& params, const MaskSpec& mask) {
    const Tensor<T>& ctx = xc ? *xc : xq;
    check_input_dim(xq.shape(), params.config.dim, "pom_forward (queries)");
    check_input_dim(ctx.shape(), params.config.dim, "pom_forward (context)");
    if (ctx.dim(0) != xq.dim(0)) {
        throw ShapeError("pom_forward: batch mismatch " + to_string(xq.shape()) + " vs " + to_string(ctx.shape()));
    }
    mask.validate(xq.dim(0), xq.dim(1), ctx.dim(1));
    const Tensor<T> state = mix(polynomial_expand(ctx, params), mask, params.config.normalize);
    return select(xq, params, state);
}

template <typename T>
Var<T> expand_features(Var<T> projected, std::size_t degree, Activation activation, ExpandPath path) {
    return projected.tape->apply(
        "poly_expand", {projected},
        [=](std::span<const Tensor<T>* const> in) { return expand_features(*in[0], degree, activation, path); },
        [=](BackwardContext<T>& ctx) {
            ctx.accumulate(0, expand_features_backward(ctx.input(0), ctx.grad_output(), degree, activation));
        });
}

template <typename T>
Var<T> polynomial_expand(ParamScope<T>& scope, Var<T> xc, const PoMParams<T>& params, ExpandPath path) {
    check_input_dim(xc.shape(), params.config.dim, "polynomial_expand");
    Var<T> projected = ops::linear(xc, scope(params.w_poly), bias_var(scope, params, params.b_poly));
    return expand_features(projected, params.config.degree, params.config.activation, path);
}

template <typename T>
Var<T> mix(Var<T> features, const MaskSpec& mask, bool normalize) {
    return features.tape->apply(
        "mix", {features},
        [mask, normalize](std::span<const Tensor<T>* const> in) { return mix_forward(*in[0], mask, normalize); },
        [mask, normalize](BackwardContext<T>& ctx) {
            ctx.accumulate(0, mix_backward(ctx.input(0), ctx.grad_output(), mask, normalize));
        });
}

template <typename T>
Var<T> gate_state(Var<T> selection_logits, Var<T> state) {
    return selection_logits.tape->apply(
        "gate_state", {selection_logits, state},
        [](std::span<const Tensor<T>* const> in) { return gate_state(*in[0], *in[1]); },
        [](BackwardContext<T>& ctx) {
            const Tensor<T>& S = ctx.input(0);
            const Tensor<T>& H = ctx.input(1);
            const Tensor<T>& G = ctx.grad_output();
            const std::size_t nb = S.dim(0), n = S.dim(1), w = S.dim(2);
            const bool shared = H.dim(1) == 1;
            const bool flip = diag::fault_active(diag::Fault::select_sign_flip);
            const bool sigmoid_fault = diag::fault_active(diag::Fault::sigmoid_backward_off);
            const Tensor<T> sig = sigmoid(S);
            Tensor<T> ds(S.shape());
            Tensor<T> dh(H.shape());
            for (std::size_t b = 0; b < nb; ++b) {
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t row = (b * n + i) * w;
                    const std::size_t hrow = (shared ? b : b * n + i) * w;
                    const T sign = (flip && i == 0) ? T{-1} : T{1};
                    for (std::size_t c = 0; c < w; ++c) {
                        const T sg = sig[row + c];
                        const T g = sign * G[row + c];
                        const T dsig = sigmoid_fault ? sg : act::sigmoid_grad_from_output(sg);
                        ds[row + c] = g * H[hrow + c] * dsig;
                        dh[hrow + c] += g * sg;
                    }
                }
            }
            ctx.accumulate(0, std::move(ds));
            ctx.accumulate(1, std::move(dh));
        });
}

template <typename T>
Var<T> select(ParamScope<T>& scope, Var<T> xq, const PoMParams<T>& params, Var<T> state) {
    check_input_dim(xq.shape(), params.config.dim, "select");
    Var<T> s = ops::linear(xq, scope(params.w_sel), bias_var(scope, params, params.b_sel));
    Var<T> z = gate_state(s, state);
    return ops::linear(z, scope(params.w_out), bias_var(scope, params, params.b_out));
}

template <typename T>
Var<T> pom_forward(ParamScope<T>& scope, Var<T> xq, std::optional<Var<T>> xc, const PoMParams<T>& params,
                   const MaskSpec& mask) {
    Var<T> ctx = xc ? *xc : xq;
    check_input_dim(xq.shape(), params.config.dim, "pom_forward (queries)");
    check_input_dim(ctx.shape(), params.config.dim, "pom_forward (context)");
    if (ctx.shape()[0] != xq.shape()[0]) {
        throw ShapeError("pom_forward: batch mismatch " + to_string(xq.shape()) + " vs " + to_string(ctx.shape()));
    }
    mask.validate(xq.shape()[0], xq.shape()[1], ctx.shape()[1]);
    Var<T> state = mix(polynomial_expand(scope, ctx, params), mask, params.config.normalize);
    return select(scope, xq, params, state);
}

#define POM_INSTANTIATE(T)                                                                                      \
    template struct PoMParams<T>;                                                                               \
    template PoMParams<T> init_pom(const PoMConfig&, Rng&, double);                                             \
    template Tensor<T> expand_features(const Tensor<T>&, std::size_t, Activation, ExpandPath);                  \
    template Tensor<T> expand_features_backward(const Tensor<T>&, const Tensor<T>&, std::size_t, Activation);   \
    template Tensor<T> polynomial_expand(const Tensor<T>&, const PoMParams<T>&, ExpandPath);                    \
    template Tensor<T> mix(const Tensor<T>&, const MaskSpec&, bool);                                            \
    template Tensor<T> gate_state(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> select(const Tensor<T>&, const PoMParams<T>&, const Tensor<T>&);                         \
    template Tensor<T> pom_forward(const Tensor<T>&, const Tensor<T>*, const PoMParams<T>&, const MaskSpec&);   \
    template Var<T> expand_features(Var<T>, std::size_t, Activation, ExpandPath);                               \
    template Var<T> polynomial_expand(ParamScope<T>&, Var<T>, const PoMParams<T>&, ExpandPath);                 \
    template Var<T> mix(Var<T>, const MaskSpec&, bool);                                                         \
    template Var<T> gate_state(Var<T>, Var<T>);                                                                 \
    template Var<T> select(ParamScope<T>&, Var<T>, const PoMParams<T>&, Var<T>);                                \
    template Var<T> pom_forward(ParamScope<T>&, Var<T>, std::optional<Var<T>>, const PoMParams<T>&,             \
                                const MaskSpec&);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom
