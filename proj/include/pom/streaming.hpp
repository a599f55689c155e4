#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pom/mixer.hpp"

// Recurrent form of the mixer. The state carries the running feature sum and
// the number of absorbed tokens, so a query can use the same mean the masked
// parallel forward computes.
namespace pom {

template <typename T>
struct PoMState {
    std::vector<T> sum;  // length kD
    std::size_t count = 0;
};

template <typename T>
PoMState<T> state_init(const PoMParams<T>& params);

/// Absorbs one token's polynomial features (length kD).
template <typename T>
PoMState<T> state_update(PoMState<T> state, std::span<const T> token_features);

/// Absorbs a block of tokens, features [b x kD] (or [1 x b x kD]).
template <typename T>
PoMState<T> state_update_block(PoMState<T> state, const Tensor<T>& block_features);

/// Mixed state as a query sees it: sum / (1e-7 + count) when normalizing.
/// An empty state gives zeros and bumps the empty-row warning counter.
template <typename T>
Tensor<T> state_value(const PoMState<T>& state, bool normalize = true);

/// Queries [q x d] (or [1 x q x d]) against the state -> [q x d].
template <typename T>
Tensor<T> state_query(const Tensor<T>& xq, const PoMParams<T>& params, const PoMState<T>& state);

/// Self-mixing, token by token: each token is absorbed, then queried.
/// x [B x n x d] -> [B x n x d]; equals pom_forward with a causal mask.
template <typename T>
Tensor<T> stream_tokens(const Tensor<T>& x, const PoMParams<T>& params);

/// Self-mixing, block by block (last block may be short): each block is
/// absorbed, then its tokens query. Equals pom_forward with BlockCausal(block).
template <typename T>
Tensor<T> stream_blocks(const Tensor<T>& x, const PoMParams<T>& params, std::size_t block);

}  // namespace pom
