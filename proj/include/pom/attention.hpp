#pragma once

#include <cstddef>
#include <optional>

#include "pom/mask.hpp"
#include "pom/random.hpp"
#include "pom/tape.hpp"

// Multi-head softmax attention with the same calling convention as
// pom_forward. Masks are lowered to -inf logits; a query that sees no
// context token gets a zero output and bumps the empty-row warning counter.
namespace pom {

template <typename T>
struct MHAParams {
    std::size_t dim = 0;
    std::size_t heads = 1;
    Tensor<T> w_q;  // [d x d]
    Tensor<T> w_k;
    Tensor<T> w_v;
    Tensor<T> w_o;

    template <typename F>
    void visit(F&& f) {
        f("w_q", w_q);
        f("w_k", w_k);
        f("w_v", w_v);
        f("w_o", w_o);
    }
    std::size_t head_dim() const { return dim / heads; }
    void validate() const;
};

template <typename T>
MHAParams<T> init_mha(std::size_t dim, std::size_t heads, Rng& rng, double weight_std = 0.02);

/// softmax(Q K^T / sqrt(d/heads) + mask) V per head, heads concatenated.
/// q [B x m x d], k and v [B x n x d].
template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       std::size_t heads, const MaskSpec& mask = MaskSpec::none());

/// Attention weights of one (batch, head) pair, [m x n]. For tests.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads, std::size_t batch,
                            std::size_t head, const MaskSpec& mask = MaskSpec::none());

template <typename T>
Tensor<T> mha_forward(const Tensor<T>& xq, const Tensor<T>* xc, const MHAParams<T>& params,
                      const MaskSpec& mask = MaskSpec::none());

template <typename T>
Var<T> scaled_dot_product_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads,
                                    const MaskSpec& mask = MaskSpec::none());

template <typename T>
Var<T> mha_forward(ParamScope<T>& scope, Var<T> xq, std::optional<Var<T>> xc, const MHAParams<T>& params,
                   const MaskSpec& mask = MaskSpec::none());

}  // namespace pom
