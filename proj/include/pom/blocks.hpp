#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "pom/mask.hpp"
#include "pom/mixer.hpp"
#include "pom/random.hpp"
#include "pom/tape.hpp"

// Network blocks built on the mixer.
//
//   polymorpher:  y = x + PoM(x);  out = y + FF(y)
//   image_dip:    AdaLN-modulated PoM and FF branches, each with a (1 + g) gate,
//                 driven by one condition vector per sample.
//   video_dip:    gated cross-mixing from text tokens, then gated self-mixing
//                 under a temporal mask, then the gated FF branch.
//
// Layer norms are affine-free with eps 1e-6. Modulation is x·(1 + s) + b.
namespace pom {

inline constexpr double kBlockNormEps = 1e-6;

enum class BlockVariant : std::uint8_t { polymorpher, image_dip, video_dip };

const char* to_string(BlockVariant v);

struct BlockConfig {
    BlockVariant variant = BlockVariant::image_dip;
    std::size_t dim = 0;
    std::size_t degree = 2;
    std::size_t expand = 2;
    std::size_t ffw_expand = 4;

    /// Modulation coefficients produced by the condition head (in units of dim).
    std::size_t cond_chunks() const;
    /// Gates produced by the gate head (in units of dim).
    std::size_t gate_chunks() const;
    PoMConfig pom_config() const;
    void validate() const;
};

template <typename T>
struct BlockParams {
    BlockConfig config;
    PoMParams<T> pom;
    PoMParams<T> cross_pom;  // video_dip only
    Tensor<T> ffw_w1;        // [f·d x d]
    Tensor<T> ffw_b1;        // [f·d]
    Tensor<T> ffw_w2;        // [d x f·d]
    Tensor<T> ffw_b2;        // [d]
    Tensor<T> cond_w;        // [cond_chunks·d x d], dip variants only
    Tensor<T> cond_b;
    Tensor<T> gate_w;        // [gate_chunks·d x d], dip variants only
    Tensor<T> gate_b;

    /// Calls f(name, tensor) for every trainable tensor of this variant.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t parameter_count() const;
    void validate() const;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        self.pom.visit([&](const std::string& n, auto& t) { f("pom." + n, t); });
        if (self.config.variant == BlockVariant::video_dip) {
            self.cross_pom.visit([&](const std::string& n, auto& t) { f("cross_pom." + n, t); });
        }
        f("ffw_w1", self.ffw_w1);
        f("ffw_b1", self.ffw_b1);
        f("ffw_w2", self.ffw_w2);
        f("ffw_b2", self.ffw_b2);
        if (self.config.variant != BlockVariant::polymorpher) {
            f("cond_w", self.cond_w);
            f("cond_b", self.cond_b);
            f("gate_w", self.gate_w);
            f("gate_b", self.gate_b);
        }
    }
};

/// Weights ~ N(0, weight_std^2), biases zero, condition and gate heads zero.
template <typename T>
BlockParams<T> init_block(const BlockConfig& config, Rng& rng, double weight_std = 0.02);

// --- elementwise pieces ----------------------------------------------------

/// x[B x n x d] · (1 + scale) + shift with scale, shift [B x d] (or [B x 1 x d]).
template <typename T>
Tensor<T> modulation(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift);

/// x + (1 + gate) · f_out, gate [B x d] (or [B x 1 x d]) broadcast over tokens.
template <typename T>
Tensor<T> gated_residual(const Tensor<T>& x, const Tensor<T>& f_out, const Tensor<T>& gate);

template <typename T>
Var<T> modulation(Var<T> x, Var<T> scale, Var<T> shift);
template <typename T>
Var<T> gated_residual(Var<T> x, Var<T> f_out, Var<T> gate);

/// linear -> gelu -> linear.
template <typename T>
Var<T> feed_forward(ParamScope<T>& scope, Var<T> x, const BlockParams<T>& params);

// --- blocks ------------------------------------------------------------------

template <typename T>
Var<T> polymorpher_block(ParamScope<T>& scope, Var<T> x, const BlockParams<T>& params,
                         const MaskSpec& mask = MaskSpec::none());

/// cond is [B x d]: the summed class and time embedding of each sample.
template <typename T>
Var<T> image_dip_block(ParamScope<T>& scope, Var<T> x, Var<T> cond, const BlockParams<T>& params,
                       const MaskSpec& mask = MaskSpec::none());

/// t is [B x d], text is [B x n_text x d]. text_mask is none or a padding mask
/// over text tokens; temporal_mask is none or block-causal.
template <typename T>
Var<T> video_dip_block(ParamScope<T>& scope, Var<T> x, Var<T> t, Var<T> text, const BlockParams<T>& params,
                       const MaskSpec& text_mask = MaskSpec::none(),
                       const MaskSpec& temporal_mask = MaskSpec::none());

// Gradient-free conveniences.
template <typename T>
Tensor<T> polymorpher_block(const Tensor<T>& x, const BlockParams<T>& params,
                            const MaskSpec& mask = MaskSpec::none());
template <typename T>
Tensor<T> image_dip_block(const Tensor<T>& x, const Tensor<T>& cond, const BlockParams<T>& params,
                          const MaskSpec& mask = MaskSpec::none());
template <typename T>
Tensor<T> video_dip_block(const Tensor<T>& x, const Tensor<T>& t, const Tensor<T>& text, const BlockParams<T>& params,
                          const MaskSpec& text_mask = MaskSpec::none(),
                          const MaskSpec& temporal_mask = MaskSpec::none());

}  // namespace pom
