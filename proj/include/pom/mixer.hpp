#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "pom/mask.hpp"
#include "pom/random.hpp"
#include "pom/tape.hpp"

// The Polynomial Mixer.
//
// For context tokens x_j the mixer builds polynomial features
//   f_j = [h(W_1 x_j); h(W_1 x_j)∘h(W_2 x_j); ...; ∏_{m<=k} h(W_m x_j)]   (width k·D)
// mixes them into a state H (one row per query, or a single shared row), and
// lets each query token read the state through a sigmoid gate:
//   PoM(x_i) = W_o [σ(W_s x_i) ∘ H_i].
// Mixing is a mean by default: masked sums are divided by (1e-7 + visible count),
// unmasked and padding-masked sums by the exact token count.
namespace pom {

inline constexpr double kMixEpsilon = 1e-7;

enum class Activation : std::uint8_t { gelu, identity };

/// How polynomial features are formed. `specialized` uses fixed-degree code
/// for k in {2, 3, 4}; both paths produce bit-identical results.
enum class ExpandPath : std::uint8_t { automatic, general, specialized };

struct PoMConfig {
    std::size_t dim = 0;     // d
    std::size_t degree = 2;  // k
    std::size_t expand = 2;  // e, so D = e·d
    bool bias = true;
    Activation activation = Activation::gelu;
    bool normalize = true;

    std::size_t width() const { return expand * dim; }
    std::size_t state_dim() const { return degree * expand * dim; }
    void validate() const;
};

template <typename T>
struct PoMParams {
    PoMConfig config;
    Tensor<T> w_poly;  // [kD x d], stacks W_1..W_k
    Tensor<T> b_poly;  // [kD]
    Tensor<T> w_sel;   // [kD x d]
    Tensor<T> b_sel;   // [kD]
    Tensor<T> w_out;   // [d x kD]
    Tensor<T> b_out;   // [d]

    /// Calls f(name, tensor) for every trainable tensor; biases only when enabled.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t parameter_count() const;
    /// Shapes consistent with config, all weights finite.
    void validate() const;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        f("w_poly", self.w_poly);
        if (self.config.bias) f("b_poly", self.b_poly);
        f("w_sel", self.w_sel);
        if (self.config.bias) f("b_sel", self.b_sel);
        f("w_out", self.w_out);
        if (self.config.bias) f("b_out", self.b_out);
    }
};

/// Weights ~ N(0, weight_std^2), biases zero.
template <typename T>
PoMParams<T> init_pom(const PoMConfig& config, Rng& rng, double weight_std = 0.02);

// --- pure kernels ----------------------------------------------------------

/// Polynomial features of already-projected inputs [..., kD].
template <typename T>
Tensor<T> expand_features(const Tensor<T>& projected, std::size_t degree, Activation activation,
                          ExpandPath path = ExpandPath::automatic);

/// Gradient of expand_features with respect to its input.
template <typename T>
Tensor<T> expand_features_backward(const Tensor<T>& projected, const Tensor<T>& grad_out, std::size_t degree,
                                   Activation activation);

/// xc [B x n x d] -> features [B x n x kD].
template <typename T>
Tensor<T> polynomial_expand(const Tensor<T>& xc, const PoMParams<T>& params, ExpandPath path = ExpandPath::automatic);

/// features [B x n x kD] -> state [B x m x kD], m = 1 for none/padding masks,
/// n for causal masks, the mask's query count for full masks.
template <typename T>
Tensor<T> mix(const Tensor<T>& features, const MaskSpec& mask, bool normalize = true);

/// σ(s) ∘ state, with state broadcast across queries when it has one row.
template <typename T>
Tensor<T> gate_state(const Tensor<T>& selection_logits, const Tensor<T>& state);

/// xq [B x n x d], state [B x {1|n} x kD] -> [B x n x d].
template <typename T>
Tensor<T> select(const Tensor<T>& xq, const PoMParams<T>& params, const Tensor<T>& state);

/// Full mixer. `xc` null means self-mixing.
template <typename T>
Tensor<T> pom_forward(const Tensor<T>& xq, const Tensor<T>* xc, const PoMParams<T>& params,
                      const MaskSpec& mask = MaskSpec::none());

// --- differentiable versions -----------------------------------------------

template <typename T>
Var<T> expand_features(Var<T> projected, std::size_t degree, Activation activation,
                       ExpandPath path = ExpandPath::automatic);

template <typename T>
Var<T> polynomial_expand(ParamScope<T>& scope, Var<T> xc, const PoMParams<T>& params,
                         ExpandPath path = ExpandPath::automatic);

template <typename T>
Var<T> mix(Var<T> features, const MaskSpec& mask, bool normalize = true);

template <typename T>
Var<T> gate_state(Var<T> selection_logits, Var<T> state);

template <typename T>
Var<T> select(ParamScope<T>& scope, Var<T> xq, const PoMParams<T>& params, Var<T> state);

template <typename T>
Var<T> pom_forward(ParamScope<T>& scope, Var<T> xq, std::optional<Var<T>> xc, const PoMParams<T>& params,
                   const MaskSpec& mask = MaskSpec::none());

}  // namespace pom
