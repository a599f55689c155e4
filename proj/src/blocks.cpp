#include "pom/blocks.hpp"

#include <stdexcept>
#include <string>

#include "pom/ops.hpp"

namespace pom {

const char* to_string(BlockVariant v) {
    switch (v) {
        case BlockVariant::polymorpher: return "polymorpher";
        case BlockVariant::image_dip: return "image_dip";
        case BlockVariant::video_dip: return "video_dip";
    }
    return "?";
}

std::size_t BlockConfig::cond_chunks() const {
    switch (variant) {
        case BlockVariant::polymorpher: return 0;
        case BlockVariant::image_dip: return 4;
        case BlockVariant::video_dip: return 8;
    }
    return 0;
}

std::size_t BlockConfig::gate_chunks() const {
    switch (variant) {
        case BlockVariant::polymorpher: return 0;
        case BlockVariant::image_dip: return 2;
        case BlockVariant::video_dip: return 3;
    }
    return 0;
}

PoMConfig BlockConfig::pom_config() const {
    PoMConfig pc;
    pc.dim = dim;
    pc.degree = degree;
    pc.expand = expand;
    return pc;
}

void BlockConfig::validate() const {
    if (dim == 0) throw std::invalid_argument("block: dim must be positive");
    if (ffw_expand == 0) throw std::invalid_argument("block: ffw_expand must be positive");
    pom_config().validate();
}

namespace {

template <typename T>
void expect_shape(const Tensor<T>& t, const Shape& shape, const std::string& name) {
    if (t.shape() != shape) {
        throw ShapeError("block parameter " + name + " has shape " + to_string(t.shape()) + ", expected " +
                         to_string(shape));
    }
}

}  // namespace

template <typename T>
std::size_t BlockParams<T>::parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
void BlockParams<T>::validate() const {
    config.validate();
    const std::size_t d = config.dim, f = config.ffw_expand * config.dim;
    pom.validate();
    if (pom.config.dim != d) throw std::invalid_argument("block: mixer dim does not match block dim");
    if (config.variant == BlockVariant::video_dip) {
        cross_pom.validate();
        if (cross_pom.config.dim != d) throw std::invalid_argument("block: cross mixer dim does not match block dim");
    }
    expect_shape(ffw_w1, {f, d}, "ffw_w1");
    expect_shape(ffw_b1, {f}, "ffw_b1");
    expect_shape(ffw_w2, {d, f}, "ffw_w2");
    expect_shape(ffw_b2, {d}, "ffw_b2");
    if (config.variant != BlockVariant::polymorpher) {
        expect_shape(cond_w, {config.cond_chunks() * d, d}, "cond_w");
        expect_shape(cond_b, {config.cond_chunks() * d}, "cond_b");
        expect_shape(gate_w, {config.gate_chunks() * d, d}, "gate_w");
        expect_shape(gate_b, {config.gate_chunks() * d}, "gate_b");
    }
    visit([](const std::string& name, const Tensor<T>& t) { require_finite(t, "block parameter " + name); });
}

template <typename T>
BlockParams<T> init_block(const BlockConfig& config, Rng& rng, double weight_std) {
    config.validate();
    const std::size_t d = config.dim, f = config.ffw_expand * config.dim;
    BlockParams<T> p;
    p.config = config;
    p.pom = init_pom<T>(config.pom_config(), rng, weight_std);
    if (config.variant == BlockVariant::video_dip) p.cross_pom = init_pom<T>(config.pom_config(), rng, weight_std);
    p.ffw_w1 = rng.normal_tensor<T>({f, d}, weight_std);
    p.ffw_b1 = Tensor<T>::zeros({f});
    p.ffw_w2 = rng.normal_tensor<T>({d, f}, weight_std);
    p.ffw_b2 = Tensor<T>::zeros({d});
    if (config.variant != BlockVariant::polymorpher) {
        p.cond_w = Tensor<T>::zeros({config.cond_chunks() * d, d});
        p.cond_b = Tensor<T>::zeros({config.cond_chunks() * d});
        p.gate_w = Tensor<T>::zeros({config.gate_chunks() * d, d});
        p.gate_b = Tensor<T>::zeros({config.gate_chunks() * d});
    }
    return p;
}

// --- elementwise pieces ----------------------------------------------------

namespace {

// Accepts [B x d] or [B x 1 x d] per-sample vectors for x [B x n x d].
template <typename T>
void check_per_sample(const Tensor<T>& x, const Tensor<T>& v, const char* what) {
    const bool ok = x.rank() == 3 && ((v.rank() == 2 && v.dim(0) == x.dim(0) && v.dim(1) == x.dim(2)) ||
                                      (v.rank() == 3 && v.dim(0) == x.dim(0) && v.dim(1) == 1 && v.dim(2) == x.dim(2)));
    if (!ok) {
        throw ShapeError(std::string(what) + ": x " + to_string(x.shape()) + " and per-sample vector " +
                         to_string(v.shape()) + " do not broadcast");
    }
}

template <typename T>
Var<T> per_sample(Var<T> v) {
    if (v.shape().size() == 3 && v.shape()[1] == 1) return ops::reshape(v, {v.shape()[0], v.shape()[2]});
    return v;
}

}  // namespace

template <typename T>
Tensor<T> modulation(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift) {
    check_per_sample(x, scale, "modulation");
    check_per_sample(x, shift, "modulation");
    const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
    Tensor<T> out(x.shape());
    for (std::size_t b = 0; b < nb; ++b) {
        const T* s = scale.raw() + b * d;
        const T* sh = shift.raw() + b * d;
        for (std::size_t i = 0; i < n; ++i) {
            const T* xr = x.raw() + (b * n + i) * d;
            T* o = out.raw() + (b * n + i) * d;
            for (std::size_t j = 0; j < d; ++j) o[j] = xr[j] * (T{1} + s[j]) + sh[j];
        }
    }
    return out;
}

template <typename T>
Tensor<T> gated_residual(const Tensor<T>& x, const Tensor<T>& f_out, const Tensor<T>& gate) {
    if (x.shape() != f_out.shape()) {
        throw ShapeError("gated_residual: x " + to_string(x.shape()) + " vs branch " + to_string(f_out.shape()));
    }
    check_per_sample(x, gate, "gated_residual");
    const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
    Tensor<T> out(x.shape());
    for (std::size_t b = 0; b < nb; ++b) {
        const T* g = gate.raw() + b * d;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = (b * n + i) * d;
            for (std::size_t j = 0; j < d; ++j) out[row + j] = x[row + j] + f_out[row + j] * (T{1} + g[j]);
        }
    }
    return out;
}

template <typename T>
Var<T> modulation(Var<T> x, Var<T> scale, Var<T> shift) {
    return ops::scale_shift<T>(x, per_sample(scale), per_sample(shift), T{1});
}

template <typename T>
Var<T> gated_residual(Var<T> x, Var<T> f_out, Var<T> gate) {
    return ops::add(x, ops::scale_shift<T>(f_out, per_sample(gate), std::nullopt, T{1}));
}

template <typename T>
Var<T> feed_forward(ParamScope<T>& scope, Var<T> x, const BlockParams<T>& params) {
    Var<T> h = ops::gelu(ops::linear<T>(x, scope(params.ffw_w1), scope(params.ffw_b1)));
    return ops::linear<T>(h, scope(params.ffw_w2), scope(params.ffw_b2));
}

// --- blocks ------------------------------------------------------------------

namespace {

void require_variant(const BlockConfig& c, BlockVariant v, const char* what) {
    if (c.variant != v) {
        throw std::invalid_argument(std::string(what) + ": parameters are for a " + to_string(c.variant) + " block");
    }
}

template <typename T>
void check_tokens(const Shape& s, std::size_t d, const char* what) {
    if (s.size() != 3 || s[2] != d) {
        throw ShapeError(std::string(what) + ": expected [B x n x " + std::to_string(d) + "], got " + to_string(s));
    }
}

template <typename T>
void check_condition(const Shape& s, std::size_t batch, std::size_t d, const char* what) {
    if (s.size() != 2 || s[0] != batch || s[1] != d) {
        throw ShapeError(std::string(what) + ": condition must be [" + std::to_string(batch) + " x " +
                         std::to_string(d) + "], got " + to_string(s));
    }
}

// SiLU -> linear -> split into `parts` vectors of width d.
template <typename T>
std::vector<Var<T>> condition_head(ParamScope<T>& scope, Var<T> cond, const Tensor<T>& w, const Tensor<T>& b,
                                   std::size_t parts) {
    return ops::chunk(ops::linear<T>(ops::silu(cond), scope(w), scope(b)), parts, 1);
}

}  // namespace

template <typename T>
Var<T> polymorpher_block(ParamScope<T>& scope, Var<T> x, const BlockParams<T>& params, const MaskSpec& mask) {
    require_variant(params.config, BlockVariant::polymorpher, "polymorpher_block");
    params.validate();
    check_tokens<T>(x.shape(), params.config.dim, "polymorpher_block");
    Var<T> y = ops::add(x, pom_forward<T>(scope, x, std::nullopt, params.pom, mask));
    return ops::add(y, feed_forward(scope, y, params));
}

template <typename T>
Var<T> image_dip_block(ParamScope<T>& scope, Var<T> x, Var<T> cond, const BlockParams<T>& params,
                       const MaskSpec& mask) {
    require_variant(params.config, BlockVariant::image_dip, "image_dip_block");
    params.validate();
    check_tokens<T>(x.shape(), params.config.dim, "image_dip_block");
    check_condition<T>(cond.shape(), x.shape()[0], params.config.dim, "image_dip_block");
    const T eps = static_cast<T>(kBlockNormEps);
    const auto m = condition_head(scope, cond, params.cond_w, params.cond_b, 4);
    const auto g = condition_head(scope, cond, params.gate_w, params.gate_b, 2);

    Var<T> x_ln = modulation(ops::layer_norm(x, eps), m[0], m[1]);
    x = gated_residual(x, pom_forward<T>(scope, x_ln, std::nullopt, params.pom, mask), g[0]);

    x_ln = modulation(ops::layer_norm(x, eps), m[2], m[3]);
    return gated_residual(x, feed_forward(scope, x_ln, params), g[1]);
}

template <typename T>
Var<T> video_dip_block(ParamScope<T>& scope, Var<T> x, Var<T> t, Var<T> text, const BlockParams<T>& params,
                       const MaskSpec& text_mask, const MaskSpec& temporal_mask) {
    require_variant(params.config, BlockVariant::video_dip, "video_dip_block");
    params.validate();
    const std::size_t d = params.config.dim;
    check_tokens<T>(x.shape(), d, "video_dip_block");
    check_tokens<T>(text.shape(), d, "video_dip_block (text)");
    check_condition<T>(t.shape(), x.shape()[0], d, "video_dip_block");
    if (text_mask.kind() != MaskSpec::Kind::none && text_mask.kind() != MaskSpec::Kind::padding) {
        throw std::invalid_argument("video_dip_block: text mask must be none or padding");
    }
    if (temporal_mask.kind() != MaskSpec::Kind::none && temporal_mask.kind() != MaskSpec::Kind::block_causal) {
        throw std::invalid_argument("video_dip_block: temporal mask must be none or block-causal");
    }
    const T eps = static_cast<T>(kBlockNormEps);
    const auto m = condition_head(scope, t, params.cond_w, params.cond_b, 8);
    const auto g = condition_head(scope, t, params.gate_w, params.gate_b, 3);

    Var<T> x_ln = modulation(ops::layer_norm(x, eps), m[0], m[1]);
    const Var<T> c_ln = modulation(ops::layer_norm(text, eps), m[2], m[3]);
    x = gated_residual(x, pom_forward<T>(scope, x_ln, std::optional<Var<T>>(c_ln), params.cross_pom, text_mask), g[0]);

    x_ln = modulation(ops::layer_norm(x, eps), m[4], m[5]);
    x = gated_residual(x, pom_forward<T>(scope, x_ln, std::nullopt, params.pom, temporal_mask), g[1]);

    x_ln = modulation(ops::layer_norm(x, eps), m[6], m[7]);
    return gated_residual(x, feed_forward(scope, x_ln, params), g[2]);
}

template <typename T>
Tensor<T> polymorpher_block(const Tensor<T>& x, const BlockParams<T>& params, const MaskSpec& mask) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    ParamScope<T> scope(tape, false);
    return polymorpher_block(scope, tape.constant(x), params, mask).value();
}

template <typename T>
Tensor<T> image_dip_block(const Tensor<T>& x, const Tensor<T>& cond, const BlockParams<T>& params,
                          const MaskSpec& mask) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    ParamScope<T> scope(tape, false);
    return image_dip_block(scope, tape.constant(x), tape.constant(cond), params, mask).value();
}

template <typename T>
Tensor<T> video_dip_block(const Tensor<T>& x, const Tensor<T>& t, const Tensor<T>& text, const BlockParams<T>& params,
                          const MaskSpec& text_mask, const MaskSpec& temporal_mask) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    ParamScope<T> scope(tape, false);
    return video_dip_block(scope, tape.constant(x), tape.constant(t), tape.constant(text), params, text_mask,
                           temporal_mask)
        .value();
}

#define POM_INSTANTIATE(T)                                                                                          \
    template struct BlockParams<T>;                                                                                 \
    template BlockParams<T> init_block(const BlockConfig&, Rng&, double);                                           \
    template Tensor<T> modulation(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> gated_residual(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Var<T> modulation(Var<T>, Var<T>, Var<T>);                                                             \
    template Var<T> gated_residual(Var<T>, Var<T>, Var<T>);                                                         \
    template Var<T> feed_forward(ParamScope<T>&, Var<T>, const BlockParams<T>&);                                    \
    template Var<T> polymorpher_block(ParamScope<T>&, Var<T>, const BlockParams<T>&, const MaskSpec&);              \
    template Var<T> image_dip_block(ParamScope<T>&, Var<T>, Var<T>, const BlockParams<T>&, const MaskSpec&);        \
    template Var<T> video_dip_block(ParamScope<T>&, Var<T>, Var<T>, Var<T>, const BlockParams<T>&, const MaskSpec&, \
                                    const MaskSpec&);                                                               \
    template Tensor<T> polymorpher_block(const Tensor<T>&, const BlockParams<T>&, const MaskSpec&);                 \
    template Tensor<T> image_dip_block(const Tensor<T>&, const Tensor<T>&, const BlockParams<T>&, const MaskSpec&); \
    template Tensor<T> video_dip_block(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const BlockParams<T>&, \
                                       const MaskSpec&, const MaskSpec&);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom
