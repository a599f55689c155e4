#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pom/blocks.hpp"
#include "pom/random.hpp"
#include "pom/tape.hpp"

// Toy image denoiser: p x p patches are embedded linearly and given 2D
// sinusoidal positions; the condition is a class embedding (with one extra
// null row for unconditional use) plus an MLP of sinusoidal time features;
// a stack of image blocks follows; a modulated, zero-initialized linear head
// maps tokens back to patches.
namespace pom {

struct DenoiserConfig {
    std::size_t image_h = 1;
    std::size_t image_w = 2;
    std::size_t patch = 1;
    std::size_t classes = 4;
    std::size_t dim = 64;
    std::size_t depth = 2;
    std::size_t degree = 2;
    std::size_t expand = 2;
    std::size_t ffw_expand = 2;

    std::size_t data_dim() const { return image_h * image_w; }
    std::size_t patch_dim() const { return patch * patch; }
    std::size_t tokens() const { return (image_h / patch) * (image_w / patch); }
    int null_class() const { return static_cast<int>(classes); }
    BlockConfig block_config() const;
    void validate() const;
};

struct DenoiserParams {
    DenoiserConfig config;
    Tensor<double> patch_w;      // [d x p²]
    Tensor<double> patch_b;      // [d]
    Tensor<double> class_table;  // [(classes + 1) x d], last row is the null class
    Tensor<double> time_w1;      // [d x d]
    Tensor<double> time_b1;
    Tensor<double> time_w2;      // [d x d]
    Tensor<double> time_b2;
    std::vector<BlockParams<double>> blocks;
    Tensor<double> final_mod_w;  // [2d x d] -> shift, scale
    Tensor<double> final_mod_b;
    Tensor<double> final_w;      // [p² x d]
    Tensor<double> final_b;

    /// Calls f(name, tensor) for every trainable tensor, in a fixed order.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t parameter_count() const;
    /// Parameters of the mixer projections across all blocks.
    std::size_t pom_parameter_count() const;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        f("patch_w", self.patch_w);
        f("patch_b", self.patch_b);
        f("class_table", self.class_table);
        f("time_w1", self.time_w1);
        f("time_b1", self.time_b1);
        f("time_w2", self.time_w2);
        f("time_b2", self.time_b2);
        for (std::size_t i = 0; i < self.blocks.size(); ++i) {
            const std::string prefix = "blocks." + std::to_string(i) + ".";
            self.blocks[i].visit([&](const std::string& n, auto& t) { f(prefix + n, t); });
        }
        f("final_mod_w", self.final_mod_w);
        f("final_mod_b", self.final_mod_b);
        f("final_w", self.final_w);
        f("final_b", self.final_b);
    }
};

/// Weights ~ N(0, 0.02^2), biases zero; modulation, gate and output heads zero.
DenoiserParams init_denoiser(const DenoiserConfig& config, Rng& rng);

/// Sinusoidal features of 1000·t, one row per sample.
Tensor<double> time_features(const std::vector<double>& t, std::size_t dim);

/// x [B x data_dim], labels in [0, classes] (classes = null), t per sample -> [B x data_dim].
Var<double> denoiser_forward(ParamScope<double>& scope, Var<double> x, const std::vector<int>& labels,
                             const std::vector<double>& t, const DenoiserParams& params);

/// Gradient-free prediction.
Tensor<double> denoiser_predict(const Tensor<double>& x, const std::vector<int>& labels, const std::vector<double>& t,
                                const DenoiserParams& params);

}  // namespace pom
