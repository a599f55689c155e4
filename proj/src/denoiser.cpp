#include "pom/denoiser.hpp"

#include <stdexcept>
#include <string>

#include "pom/ops.hpp"
#include "pom/posenc.hpp"

namespace pom {

BlockConfig DenoiserConfig::block_config() const {
    BlockConfig c;
    c.variant = BlockVariant::image_dip;
    c.dim = dim;
    c.degree = degree;
    c.expand = expand;
    c.ffw_expand = ffw_expand;
    return c;
}

void DenoiserConfig::validate() const {
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
        throw std::invalid_argument("denoiser: image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                                    " is not divisible into " + std::to_string(patch) + "x" +
                                    std::to_string(patch) + " patches");
    }
    if (dim == 0 || dim % 4 != 0) throw std::invalid_argument("denoiser: dim must be a positive multiple of 4");
    if (depth == 0) throw std::invalid_argument("denoiser: depth must be positive");
    if (classes == 0) throw std::invalid_argument("denoiser: at least one class is required");
    block_config().validate();
}

std::size_t DenoiserParams::parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor<double>& t) { n += t.size(); });
    return n;
}

std::size_t DenoiserParams::pom_parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.pom.parameter_count();
    return n;
}

DenoiserParams init_denoiser(const DenoiserConfig& config, Rng& rng) {
    config.validate();
    const std::size_t d = config.dim, pd = config.patch_dim();
    constexpr double std = 0.02;
    DenoiserParams p;
    p.config = config;
    p.patch_w = rng.normal_tensor<double>({d, pd}, std);
    p.patch_b = Tensor<double>::zeros({d});
    p.class_table = rng.normal_tensor<double>({config.classes + 1, d}, std);
    p.time_w1 = rng.normal_tensor<double>({d, d}, std);
    p.time_b1 = Tensor<double>::zeros({d});
    p.time_w2 = rng.normal_tensor<double>({d, d}, std);
    p.time_b2 = Tensor<double>::zeros({d});
    for (std::size_t i = 0; i < config.depth; ++i) p.blocks.push_back(init_block<double>(config.block_config(), rng, std));
    p.final_mod_w = Tensor<double>::zeros({2 * d, d});
    p.final_mod_b = Tensor<double>::zeros({2 * d});
    p.final_w = Tensor<double>::zeros({pd, d});
    p.final_b = Tensor<double>::zeros({pd});
    return p;
}

Tensor<double> time_features(const std::vector<double>& t, std::size_t dim) {
    std::vector<std::vector<double>> pos;
    pos.reserve(t.size());
    for (double v : t) pos.push_back({1000.0 * v});
    return sinusoidal_pe<double>(pos, dim);
}

namespace {

// Flat pixel index (within the whole batch) of every patch element, in token order.
std::vector<std::size_t> patch_order(const DenoiserConfig& c, std::size_t batch) {
    const std::size_t p = c.patch, gw = c.image_w / p, hw = c.data_dim();
    std::vector<std::size_t> idx;
    idx.reserve(batch * hw);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t tok = 0; tok < c.tokens(); ++tok)
            for (std::size_t a = 0; a < p; ++a)
                for (std::size_t b = 0; b < p; ++b)
                    idx.push_back(s * hw + ((tok / gw) * p + a) * c.image_w + (tok % gw) * p + b);
    return idx;
}

std::vector<std::size_t> inverse(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

}  // namespace

Var<double> denoiser_forward(ParamScope<double>& scope, Var<double> x, const std::vector<int>& labels,
                             const std::vector<double>& t, const DenoiserParams& params) {
    const DenoiserConfig& c = params.config;
    const auto& xs = x.shape();
    if (xs.size() != 2 || xs[1] != c.data_dim()) {
        throw ShapeError("denoiser: expected [B x " + std::to_string(c.data_dim()) + "] input, got " + to_string(xs));
    }
    const std::size_t batch = xs[0], d = c.dim, T = c.tokens();
    if (labels.size() != batch || t.size() != batch) {
        throw std::invalid_argument("denoiser: need one label and one time per sample");
    }
    std::vector<std::size_t> cls(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] < 0 || labels[i] > c.null_class()) {
            throw std::out_of_range("denoiser: label " + std::to_string(labels[i]) + " out of range");
        }
        cls[i] = static_cast<std::size_t>(labels[i]);
    }
    Tape<double>& tape = scope.tape();

    // Patchify and embed.
    const auto order = patch_order(c, batch);
    Var<double> pixels = ops::reshape(x, {batch * c.data_dim(), 1});
    Var<double> patches = ops::reshape(ops::gather_rows(pixels, order), {batch, T, c.patch_dim()});
    Var<double> h = ops::linear<double>(patches, scope(params.patch_w), scope(params.patch_b));
    const Tensor<double> pe = grid_pe_2d<double>(c.image_h / c.patch, c.image_w / c.patch, d);
    Tensor<double> pe_batch({batch, T, d});
    for (std::size_t s = 0; s < batch; ++s) std::copy(pe.raw(), pe.raw() + T * d, pe_batch.raw() + s * T * d);
    h = ops::add(h, tape.constant(std::move(pe_batch)));

    // Condition: class embedding + time MLP.
    Var<double> temb = tape.constant(time_features(t, d));
    temb = ops::linear<double>(ops::silu(ops::linear<double>(temb, scope(params.time_w1), scope(params.time_b1))),
                       scope(params.time_w2), scope(params.time_b2));
    Var<double> cond = ops::add(ops::gather_rows(scope(params.class_table), cls), temb);

    for (const auto& block : params.blocks) h = image_dip_block(scope, h, cond, block);

    // Modulated output head, back to pixels.
    const auto mods = ops::chunk(ops::linear<double>(ops::silu(cond), scope(params.final_mod_w), scope(params.final_mod_b)), 2, 1);
    h = modulation(ops::layer_norm(h, kBlockNormEps), mods[1], mods[0]);
    Var<double> out = ops::linear<double>(h, scope(params.final_w), scope(params.final_b));
    out = ops::gather_rows(ops::reshape(out, {batch * c.data_dim(), 1}), inverse(order));
    return ops::reshape(out, {batch, c.data_dim()});
}

Tensor<double> denoiser_predict(const Tensor<double>& x, const std::vector<int>& labels, const std::vector<double>& t,
                                const DenoiserParams& params) {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    ParamScope<double> scope(tape, false);
    return denoiser_forward(scope, tape.constant(x), labels, t, params).value();
}

}  // namespace pom
