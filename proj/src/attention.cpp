#include "pom/attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "eigen_util.hpp"
#include "pom/diagnostics.hpp"
#include "pom/ops.hpp"

namespace pom {

using detail::ConstStridedMap;
using detail::RowMat;
using detail::StridedMap;

template <typename T>
void MHAParams<T>::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("MHA: model dim " + std::to_string(dim) + " is not divisible by " +
                                    std::to_string(heads) + " heads");
    }
    for (const Tensor<T>* w : {&w_q, &w_k, &w_v, &w_o}) {
        if (w->shape() != Shape{dim, dim}) {
            throw ShapeError("MHA: projection has shape " + to_string(w->shape()) + ", expected [" +
                             std::to_string(dim) + " x " + std::to_string(dim) + "]");
        }
    }
}

template <typename T>
MHAParams<T> init_mha(std::size_t dim, std::size_t heads, Rng& rng, double weight_std) {
    MHAParams<T> p;
    p.dim = dim;
    p.heads = heads;
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("MHA: model dim " + std::to_string(dim) + " is not divisible by " +
                                    std::to_string(heads) + " heads");
    }
    p.w_q = rng.normal_tensor<T>({dim, dim}, weight_std);
    p.w_k = rng.normal_tensor<T>({dim, dim}, weight_std);
    p.w_v = rng.normal_tensor<T>({dim, dim}, weight_std);
    p.w_o = rng.normal_tensor<T>({dim, dim}, weight_std);
    return p;
}

namespace {

// Query rows processed at once; keeps the logits block small at long lengths.
constexpr Eigen::Index kRowChunk = 128;

struct Dims {
    std::size_t batch, m, n, d, heads, dh;
};

template <typename T>
Dims check_sdpa(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                const MaskSpec& mask) {
    if (q.rank() != 3 || k.rank() != 3 || v.shape() != k.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
        throw ShapeError("attention: incompatible q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                         ", v " + to_string(v.shape()));
    }
    const std::size_t d = q.dim(2);
    if (heads == 0 || d % heads != 0) {
        throw std::invalid_argument("attention: model dim " + std::to_string(d) + " is not divisible by " +
                                    std::to_string(heads) + " heads");
    }
    mask.validate(q.dim(0), q.dim(1), k.dim(1));
    return Dims{q.dim(0), q.dim(1), k.dim(1), d, heads, d / heads};
}

template <typename T>
ConstStridedMap<T> head_view(const Tensor<T>& x, std::size_t b, std::size_t h, std::size_t rows, const Dims& dm) {
    return ConstStridedMap<T>(x.raw() + b * rows * dm.d + h * dm.dh, static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(dm.dh), Eigen::OuterStride<>(static_cast<Eigen::Index>(dm.d)));
}

template <typename T>
StridedMap<T> head_view(Tensor<T>& x, std::size_t b, std::size_t h, std::size_t rows, const Dims& dm) {
    return StridedMap<T>(x.raw() + b * rows * dm.d + h * dm.dh, static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(dm.dh), Eigen::OuterStride<>(static_cast<Eigen::Index>(dm.d)));
}

// In place: scaled logits of rows [row0, row0 + S.rows()) -> attention weights.
// Masked entries are exactly zero; fully masked rows become zero rows.
template <typename T>
std::uint64_t softmax_rows(RowMat<T>& S, const MaskSpec& mask, std::size_t b, std::size_t row0, std::size_t n) {
    constexpr T neg_inf = -std::numeric_limits<T>::infinity();
    std::uint64_t empty = 0;
    const auto kind = mask.kind();
    if (kind == MaskSpec::Kind::none) {
        for (Eigen::Index r = 0; r < S.rows(); ++r) {
            Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> row(S.data() + r * S.cols(), S.cols());
            const T mx = row.maxCoeff();
            row = (row - mx).exp();
            row *= T{1} / row.sum();
        }
        return 0;
    }
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
        auto row = S.row(r);
        const std::size_t i = row0 + static_cast<std::size_t>(r);
        std::size_t limit = n;
        bool sparse = false;
        if (kind == MaskSpec::Kind::causal || kind == MaskSpec::Kind::block_causal) {
            limit = mask.visible_prefix(i, n);
        } else if (kind != MaskSpec::Kind::none) {
            sparse = true;
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask.visible(b, i, j, n)) row(static_cast<Eigen::Index>(j)) = neg_inf;
            }
        }
        auto head = row.head(static_cast<Eigen::Index>(limit));
        const T mx = limit == 0 ? neg_inf : head.maxCoeff();
        if (mx == neg_inf) {
            row.setZero();
            ++empty;
            continue;
        }
        head = (head.array() - mx).exp();
        if (sparse) {
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask.visible(b, i, j, n)) row(static_cast<Eigen::Index>(j)) = T{0};
            }
        }
        row.tail(static_cast<Eigen::Index>(n - limit)).setZero();
        head /= head.sum();
    }
    return empty;
}

template <typename T>
void attention_block(RowMat<T>& P, const RowMat<T>& Qh, const RowMat<T>& Kh, Eigen::Index r0,
                     Eigen::Index rc, T scale, const MaskSpec& mask, std::size_t b, std::size_t n,
                     std::uint64_t& empty) {
    P.resize(rc, Kh.rows());
    P.noalias() = Qh.middleRows(r0, rc) * Kh.transpose();
    P *= scale;
    empty += softmax_rows(P, mask, b, static_cast<std::size_t>(r0), n);
}

template <typename T>
Tensor<T> sdpa_forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                       const MaskSpec& mask) {
    const Dims dm = check_sdpa(q, k, v, heads, mask);
    const T scale = T{1} / std::sqrt(static_cast<T>(dm.dh));
    Tensor<T> out(q.shape());
    RowMat<T> P;
    std::uint64_t empty = 0;
    const auto m = static_cast<Eigen::Index>(dm.m);
    for (std::size_t b = 0; b < dm.batch; ++b) {
        for (std::size_t h = 0; h < dm.heads; ++h) {
            // Contiguous per-head copies keep the blocked products off strided memory.
            const RowMat<T> Qh = head_view(q, b, h, dm.m, dm);
            const RowMat<T> Kh = head_view(k, b, h, dm.n, dm);
            const RowMat<T> Vh = head_view(v, b, h, dm.n, dm);
            RowMat<T> Oh(m, static_cast<Eigen::Index>(dm.dh));
            for (Eigen::Index r0 = 0; r0 < m; r0 += kRowChunk) {
                const Eigen::Index rc = std::min(kRowChunk, m - r0);
                attention_block(P, Qh, Kh, r0, rc, scale, mask, b, dm.n, empty);
                Oh.middleRows(r0, rc).noalias() = P * Vh;
            }
            head_view(out, b, h, dm.m, dm) = Oh;
        }
    }
    diag::note_empty_rows(empty);
    return out;
}

template <typename T>
void sdpa_backward(BackwardContext<T>& ctx, std::size_t heads, const MaskSpec& mask) {
    const Tensor<T>& q = ctx.input(0);
    const Tensor<T>& k = ctx.input(1);
    const Tensor<T>& v = ctx.input(2);
    const Tensor<T>& g = ctx.grad_output();
    const Dims dm = check_sdpa(q, k, v, heads, mask);
    const T scale = T{1} / std::sqrt(static_cast<T>(dm.dh));
    Tensor<T> dq(q.shape()), dk(k.shape()), dv(v.shape());
    RowMat<T> P, dP;
    std::uint64_t empty = 0;
    const auto m = static_cast<Eigen::Index>(dm.m);
    for (std::size_t b = 0; b < dm.batch; ++b) {
        for (std::size_t h = 0; h < dm.heads; ++h) {
            const RowMat<T> Qh = head_view(q, b, h, dm.m, dm);
            const RowMat<T> Kh = head_view(k, b, h, dm.n, dm);
            const RowMat<T> Vh = head_view(v, b, h, dm.n, dm);
            const RowMat<T> Gh = head_view(g, b, h, dm.m, dm);
            RowMat<T> dQh(m, static_cast<Eigen::Index>(dm.dh));
            RowMat<T> dKh = RowMat<T>::Zero(Kh.rows(), Kh.cols());
            RowMat<T> dVh = RowMat<T>::Zero(Vh.rows(), Vh.cols());
            for (Eigen::Index r0 = 0; r0 < m; r0 += kRowChunk) {
                const Eigen::Index rc = std::min(kRowChunk, m - r0);
                attention_block(P, Qh, Kh, r0, rc, scale, mask, b, dm.n, empty);
                const auto Gc = Gh.middleRows(r0, rc);
                dVh.noalias() += P.transpose() * Gc;
                dP.resize(rc, Kh.rows());
                dP.noalias() = Gc * Vh.transpose();
                // dS = P o (dP - rowdot), reusing dP; row by row to stay contiguous.
                for (Eigen::Index r = 0; r < rc; ++r) {
                    const auto pr = P.row(r).array();
                    auto dr = dP.row(r).array();
                    const T rowdot = (pr * dr).sum();
                    dr = pr * (dr - rowdot);
                }
                dQh.middleRows(r0, rc).noalias() = scale * (dP * Kh);
                dKh.noalias() += scale * (dP.transpose() * Qh.middleRows(r0, rc));
            }
            head_view(dq, b, h, dm.m, dm) = dQh;
            head_view(dk, b, h, dm.n, dm) = dKh;
            head_view(dv, b, h, dm.n, dm) = dVh;
        }
    }
    ctx.accumulate(0, std::move(dq));
    ctx.accumulate(1, std::move(dk));
    ctx.accumulate(2, std::move(dv));
}

template <typename T>
void check_model_input(const Shape& s, std::size_t d, const char* what) {
    if (s.size() != 3 || s[2] != d) {
        throw ShapeError(std::string(what) + ": expected [batch x n x " + std::to_string(d) + "], got " +
                         to_string(s));
    }
}

}  // namespace

template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       std::size_t heads, const MaskSpec& mask) {
    return sdpa_forward(q, k, v, heads, mask);
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads, std::size_t batch,
                            std::size_t head, const MaskSpec& mask) {
    const Dims dm = check_sdpa(q, k, k, heads, mask);
    if (batch >= dm.batch || head >= dm.heads) throw std::out_of_range("attention_weights: batch/head out of range");
    const T scale = T{1} / std::sqrt(static_cast<T>(dm.dh));
    RowMat<T> P;
    std::uint64_t empty = 0;
    attention_block(P, RowMat<T>(head_view(q, batch, head, dm.m, dm)), RowMat<T>(head_view(k, batch, head, dm.n, dm)), 0,
                    static_cast<Eigen::Index>(dm.m), scale, mask, batch, dm.n, empty);
    return Tensor<T>({dm.m, dm.n}, std::vector<T>(P.data(), P.data() + P.size()));
}

template <typename T>
Tensor<T> mha_forward(const Tensor<T>& xq, const Tensor<T>* xc, const MHAParams<T>& params, const MaskSpec& mask) {
    params.validate();
    const Tensor<T>& ctx = xc ? *xc : xq;
    check_model_input<T>(xq.shape(), params.dim, "mha_forward (queries)");
    check_model_input<T>(ctx.shape(), params.dim, "mha_forward (context)");
    const Tensor<T> q = linear(xq, params.w_q);
    const Tensor<T> k = linear(ctx, params.w_k);
    const Tensor<T> v = linear(ctx, params.w_v);
    return linear(sdpa_forward(q, k, v, params.heads, mask), params.w_o);
}

template <typename T>
Var<T> scaled_dot_product_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const MaskSpec& mask) {
    return q.tape->apply(
        "attention", {q, k, v},
        [heads, mask](std::span<const Tensor<T>* const> in) { return sdpa_forward(*in[0], *in[1], *in[2], heads, mask); },
        [heads, mask](BackwardContext<T>& ctx) { sdpa_backward(ctx, heads, mask); });
}

template <typename T>
Var<T> mha_forward(ParamScope<T>& scope, Var<T> xq, std::optional<Var<T>> xc, const MHAParams<T>& params,
                   const MaskSpec& mask) {
    params.validate();
    Var<T> ctx = xc ? *xc : xq;
    check_model_input<T>(xq.shape(), params.dim, "mha_forward (queries)");
    check_model_input<T>(ctx.shape(), params.dim, "mha_forward (context)");
    Var<T> q = ops::linear(xq, scope(params.w_q));
    Var<T> k = ops::linear(ctx, scope(params.w_k));
    Var<T> v = ops::linear(ctx, scope(params.w_v));
    return ops::linear(scaled_dot_product_attention(q, k, v, params.heads, mask), scope(params.w_o));
}

#define POM_INSTANTIATE(T)                                                                                        \
    template struct MHAParams<T>;                                                                                 \
    template MHAParams<T> init_mha(std::size_t, std::size_t, Rng&, double);                                       \
    template Tensor<T> scaled_dot_product_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                                    std::size_t, const MaskSpec&);                                \
    template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,            \
                                         std::size_t, const MaskSpec&);                                           \
    template Tensor<T> mha_forward(const Tensor<T>&, const Tensor<T>*, const MHAParams<T>&, const MaskSpec&);     \
    template Var<T> scaled_dot_product_attention(Var<T>, Var<T>, Var<T>, std::size_t, const MaskSpec&);           \
    template Var<T> mha_forward(ParamScope<T>&, Var<T>, std::optional<Var<T>>, const MHAParams<T>&, const MaskSpec&);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom
