#include "pom/streaming.hpp"

#include <algorithm>
#include <stdexcept>

#include "pom/diagnostics.hpp"

namespace pom {

template <typename T>
PoMState<T> state_init(const PoMParams<T>& params) {
    params.config.validate();
    return PoMState<T>{std::vector<T>(params.config.state_dim(), T{0}), 0};
}

template <typename T>
PoMState<T> state_update(PoMState<T> state, std::span<const T> token_features) {
    if (token_features.size() != state.sum.size()) {
        throw ShapeError("state_update: token features have length " + std::to_string(token_features.size()) +
                         ", state has " + std::to_string(state.sum.size()));
    }
    for (std::size_t c = 0; c < state.sum.size(); ++c) state.sum[c] += token_features[c];
    ++state.count;
    return state;
}

template <typename T>
PoMState<T> state_update_block(PoMState<T> state, const Tensor<T>& block_features) {
    const bool ok = (block_features.rank() == 2) || (block_features.rank() == 3 && block_features.dim(0) == 1);
    if (!ok || block_features.shape().back() != state.sum.size()) {
        throw ShapeError("state_update_block: expected [b x " + std::to_string(state.sum.size()) + "], got " +
                         to_string(block_features.shape()));
    }
    const std::size_t w = state.sum.size();
    const std::size_t rows = block_features.size() / w;
    for (std::size_t r = 0; r < rows; ++r) {
        state = state_update(std::move(state), std::span<const T>(block_features.raw() + r * w, w));
    }
    return state;
}

template <typename T>
Tensor<T> state_value(const PoMState<T>& state, bool normalize) {
    Tensor<T> h({1, 1, state.sum.size()}, state.sum);
    if (state.count == 0) {
        if (normalize) diag::note_empty_rows(1);
        return Tensor<T>::zeros(h.shape());
    }
    if (normalize) {
        const T den = static_cast<T>(kMixEpsilon) + static_cast<T>(state.count);
        for (std::size_t c = 0; c < h.size(); ++c) h[c] /= den;
    }
    return h;
}

template <typename T>
Tensor<T> state_query(const Tensor<T>& xq, const PoMParams<T>& params, const PoMState<T>& state) {
    const std::size_t d = params.config.dim;
    const bool ok = (xq.rank() == 2) || (xq.rank() == 3 && xq.dim(0) == 1);
    if (!ok || xq.shape().back() != d) {
        throw ShapeError("state_query: expected [q x " + std::to_string(d) + "], got " + to_string(xq.shape()));
    }
    if (state.sum.size() != params.config.state_dim()) {
        throw ShapeError("state_query: state width " + std::to_string(state.sum.size()) +
                         " does not match parameters (" + std::to_string(params.config.state_dim()) + ")");
    }
    const std::size_t q = xq.size() / d;
    const Tensor<T> out = select(xq.reshaped({1, q, d}), params, state_value(state, params.config.normalize));
    return out.reshaped({q, d});
}

namespace {

template <typename T>
Tensor<T> stream_impl(const Tensor<T>& x, const PoMParams<T>& params, std::size_t block) {
    const std::size_t d = params.config.dim;
    if (x.rank() != 3 || x.dim(2) != d) {
        throw ShapeError("stream: expected [batch x n x " + std::to_string(d) + "], got " + to_string(x.shape()));
    }
    if (block == 0) throw std::invalid_argument("stream: block size must be >= 1");
    const std::size_t nb = x.dim(0), n = x.dim(1);
    Tensor<T> out(x.shape());
    for (std::size_t b = 0; b < nb; ++b) {
        PoMState<T> state = state_init(params);
        for (std::size_t start = 0; start < n; start += block) {
            const std::size_t len = std::min(block, n - start);
            const std::size_t offset = (b * n + start) * d;
            Tensor<T> tokens({1, len, d}, std::vector<T>(x.raw() + offset, x.raw() + offset + len * d));
            const Tensor<T> feats = polynomial_expand(tokens, params);
            if (block == 1) {
                state = state_update(std::move(state), feats.data());
            } else {
                state = state_update_block(std::move(state), feats);
            }
            const Tensor<T> y = state_query(tokens, params, state);
            std::copy(y.raw(), y.raw() + y.size(), out.raw() + offset);
        }
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> stream_tokens(const Tensor<T>& x, const PoMParams<T>& params) {
    return stream_impl(x, params, 1);
}

template <typename T>
Tensor<T> stream_blocks(const Tensor<T>& x, const PoMParams<T>& params, std::size_t block) {
    return stream_impl(x, params, block);
}

#define POM_INSTANTIATE(T)                                                                       \
    template struct PoMState<T>;                                                                 \
    template PoMState<T> state_init(const PoMParams<T>&);                                        \
    template PoMState<T> state_update(PoMState<T>, std::span<const T>);                          \
    template PoMState<T> state_update_block(PoMState<T>, const Tensor<T>&);                      \
    template Tensor<T> state_value(const PoMState<T>&, bool);                                    \
    template Tensor<T> state_query(const Tensor<T>&, const PoMParams<T>&, const PoMState<T>&);   \
    template Tensor<T> stream_tokens(const Tensor<T>&, const PoMParams<T>&);                     \
    template Tensor<T> stream_blocks(const Tensor<T>&, const PoMParams<T>&, std::size_t);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom
