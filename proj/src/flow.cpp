#include "pom/flow.hpp"

#include <stdexcept>

#include "pom/ops.hpp"

namespace pom {

const char* to_string(LossKind k) { return k == LossKind::diffusion ? "diffusion" : "flow_matching"; }

LossKind parse_loss_kind(const std::string& s) {
    if (s == "diffusion" || s == "d") return LossKind::diffusion;
    if (s == "flow_matching" || s == "fm") return LossKind::flow_matching;
    throw std::invalid_argument("unknown loss '" + s + "' (expected diffusion or flow_matching)");
}

Tensor<double> forward_process(const Tensor<double>& x0, const Tensor<double>& eps, const std::vector<double>& t) {
    if (x0.shape() != eps.shape() || x0.rank() != 2 || t.size() != x0.dim(0)) {
        throw ShapeError("forward_process: x0 " + to_string(x0.shape()) + ", eps " + to_string(eps.shape()) + ", " +
                         std::to_string(t.size()) + " times");
    }
    const std::size_t nb = x0.dim(0), d = x0.dim(1);
    Tensor<double> xt(x0.shape());
    for (std::size_t b = 0; b < nb; ++b) {
        const double a = path_alpha(t[b]), g = path_gamma(t[b]);
        for (std::size_t j = 0; j < d; ++j) xt[b * d + j] = a * x0[b * d + j] + g * eps[b * d + j];
    }
    return xt;
}

LossDraw draw_loss_noise(std::size_t batch, std::size_t dim, Rng& rng) {
    LossDraw draw{std::vector<double>(batch), Tensor<double>({batch, dim})};
    for (double& t : draw.t) t = rng.uniform();
    for (double& e : draw.eps.data()) e = rng.normal();
    return draw;
}

Var<double> batch_squared_error(Var<double> prediction, Var<double> target) {
    if (prediction.shape() != target.shape() || prediction.shape().empty()) {
        throw ShapeError("squared error: prediction " + to_string(prediction.shape()) + " vs target " +
                         to_string(target.shape()));
    }
    Var<double> diff = ops::sub(prediction, target);
    return ops::scale(ops::sum(ops::mul(diff, diff)), 1.0 / static_cast<double>(prediction.shape()[0]));
}

namespace {

Var<double> objective(LossKind kind, Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                      const std::vector<int>& labels, Rng& rng) {
    if (x0.rank() != 2 || labels.size() != x0.dim(0)) {
        throw ShapeError("loss: x0 " + to_string(x0.shape()) + " with " + std::to_string(labels.size()) + " labels");
    }
    const LossDraw draw = draw_loss_noise(x0.dim(0), x0.dim(1), rng);
    const Var<double> xt = tape.constant(forward_process(x0, draw.eps, draw.t));
    Tensor<double> target = draw.eps;
    if (kind == LossKind::flow_matching) target = sub(draw.eps, x0);
    const Var<double> pred = model(xt, labels, draw.t);
    if (!all_finite(pred.value())) throw NumericError("loss: model produced non-finite output");
    return batch_squared_error(pred, tape.constant(std::move(target)));
}

}  // namespace

Var<double> diffusion_loss(Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                           const std::vector<int>& labels, Rng& rng) {
    return objective(LossKind::diffusion, tape, model, x0, labels, rng);
}

Var<double> flow_matching_loss(Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                               const std::vector<int>& labels, Rng& rng) {
    return objective(LossKind::flow_matching, tape, model, x0, labels, rng);
}

Var<double> training_loss(LossKind kind, Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                          const std::vector<int>& labels, Rng& rng) {
    return objective(kind, tape, model, x0, labels, rng);
}

}  // namespace pom
