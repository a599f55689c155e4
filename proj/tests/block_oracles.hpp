#pragma once

// Straight-line transcriptions of the reference image and video block
// forward passes, one token at a time, built on the scalar mixer oracle.

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pom/blocks.hpp"

namespace oracle {

inline std::vector<double> silu(const double* x, std::size_t n) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] / (1.0 + std::exp(-x[i]));
    return y;
}

// Affine-free layer norm of every token of x [B x n x d].
inline Tensor<double> layer_norm(const Tensor<double>& x, double eps) {
    const std::size_t d = x.shape().back(), rows = x.size() / d;
    Tensor<double> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x[r * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mean) * (x[r * d + j] - mean);
        var /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] = (x[r * d + j] - mean) / std::sqrt(var + eps);
    }
    return y;
}

// SiLU -> linear on one condition vector per sample, split into parts of width d.
inline std::vector<std::vector<std::vector<double>>> head(const Tensor<double>& cond, const Tensor<double>& w,
                                                          const Tensor<double>& b, std::size_t parts) {
    const std::size_t nb = cond.dim(0), d = cond.dim(1);
    std::vector<std::vector<std::vector<double>>> out(parts, std::vector<std::vector<double>>(nb));
    for (std::size_t s = 0; s < nb; ++s) {
        const auto a = silu(cond.raw() + s * d, d);
        const auto y = affine(w, &b, a.data());
        for (std::size_t p = 0; p < parts; ++p) out[p][s].assign(y.begin() + p * d, y.begin() + (p + 1) * d);
    }
    return out;
}

using PerSample = std::vector<std::vector<double>>;

inline Tensor<double> modulate(const Tensor<double>& x, const PerSample& scale, const PerSample& shift) {
    const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
    Tensor<double> y(x.shape());
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                y.at(b, i, j) = x.at(b, i, j) * (1.0 + scale[b][j]) + shift[b][j];
    return y;
}

inline Tensor<double> gated_add(const Tensor<double>& x, const Tensor<double>& f, const PerSample& gate) {
    const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
    Tensor<double> y(x.shape());
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) y.at(b, i, j) = x.at(b, i, j) + f.at(b, i, j) * (1.0 + gate[b][j]);
    return y;
}

inline Tensor<double> ffw(const Tensor<double>& x, const pom::BlockParams<double>& p) {
    const std::size_t d = x.shape().back(), rows = x.size() / d;
    Tensor<double> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        auto h = affine(p.ffw_w1, &p.ffw_b1, x.raw() + r * d);
        for (double& v : h) v = static_cast<double>(gelu(v));
        const auto o = affine(p.ffw_w2, &p.ffw_b2, h.data());
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] = o[j];
    }
    return y;
}

inline Tensor<double> image_block(const Tensor<double>& x0, const Tensor<double>& c,
                                  const pom::BlockParams<double>& p) {
    const double eps = 1e-6;
    const auto m = head(c, p.cond_w, p.cond_b, 4);
    const auto g = head(c, p.gate_w, p.gate_b, 2);
    const auto &s1 = m[0], &b1 = m[1], &s2 = m[2], &b2 = m[3];
    const auto &g1 = g[0], &g2 = g[1];

    Tensor<double> x = x0;
    Tensor<double> x_ln = modulate(layer_norm(x, eps), s1, b1);
    x = gated_add(x, pom(x_ln, x_ln, p.pom, pom::MaskSpec::none()), g1);

    x_ln = modulate(layer_norm(x, eps), s2, b2);
    x = gated_add(x, ffw(x_ln, p), g2);
    return x;
}

inline Tensor<double> video_block(const Tensor<double>& x0, const Tensor<double>& t, const Tensor<double>& c,
                                  const pom::BlockParams<double>& p, const pom::MaskSpec& mask,
                                  const pom::MaskSpec& temporal_mask) {
    const double eps = 1e-6;
    const auto m = head(t, p.cond_w, p.cond_b, 8);
    const auto g = head(t, p.gate_w, p.gate_b, 3);
    const auto &sx = m[0], &bx = m[1], &sc = m[2], &bc = m[3], &s1 = m[4], &b1 = m[5], &s2 = m[6], &b2 = m[7];
    const auto &gc = g[0], &g1 = g[1], &g2 = g[2];

    Tensor<double> x = x0;
    Tensor<double> x_ln = modulate(layer_norm(x, eps), sx, bx);
    const Tensor<double> c_ln = modulate(layer_norm(c, eps), sc, bc);
    x = gated_add(x, pom(x_ln, c_ln, p.cross_pom, mask), gc);

    x_ln = modulate(layer_norm(x, eps), s1, b1);
    x = gated_add(x, pom(x_ln, x_ln, p.pom, temporal_mask), g1);

    x_ln = modulate(layer_norm(x, eps), s2, b2);
    x = gated_add(x, ffw(x_ln, p), g2);
    return x;
}

}  // namespace oracle
