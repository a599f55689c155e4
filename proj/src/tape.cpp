#include "pom/tape.hpp"

#include <stdexcept>

namespace pom {

template <typename T>
void BackwardContext<T>::accumulate(std::size_t i, Tensor<T> g) {
    if (!needs_[i]) return;
    if (g.shape() != inputs_[i]->shape()) {
        throw ShapeError("backward: gradient shape " + to_string(g.shape()) + " does not match input shape " +
                         to_string(inputs_[i]->shape()));
    }
    auto& slot = *slots_[i];
    if (!slot) {
        slot = std::move(g);
        return;
    }
    T* dst = slot->raw();
    const T* src = g.raw();
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += src[k];
}

template <typename T>
void Tape<T>::check_owner(Var<T> v, const char* what) const {
    if (v.tape != this || v.id >= nodes_.size()) {
        throw std::invalid_argument(std::string(what) + ": variable is not recorded on this tape");
    }
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad, std::string name) {
    Node node;
    node.op = name.empty() ? "leaf" : std::move(name);
    node.value = std::move(value);
    node.requires_grad = requires_grad && grad_enabled_;
    node.is_leaf = true;
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T> Tape<T>::evaluate(const Node& node) const {
    std::vector<const Tensor<T>*> in;
    in.reserve(node.inputs.size());
    for (std::size_t id : node.inputs) in.push_back(&nodes_[id].value);
    Tensor<T> out = node.forward(std::span<const Tensor<T>* const>(in.data(), in.size()));
    if (check_finite_) {
        require_finite(out, "op '" + node.op + "'");
    }
    return out;
}

template <typename T>
Var<T> Tape<T>::apply(std::string_view op, std::vector<Var<T>> inputs, ForwardFn<T> forward,
                      BackwardFn<T> backward) {
    Node node;
    node.op = std::string(op);
    node.inputs.reserve(inputs.size());
    bool needs = false;
    for (const Var<T>& v : inputs) {
        check_owner(v, node.op.c_str());
        node.inputs.push_back(v.id);
        needs = needs || nodes_[v.id].requires_grad;
    }
    node.forward = std::move(forward);
    node.requires_grad = needs && grad_enabled_;
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    node.value = evaluate(node);
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
    check_owner(v, "value");
    return nodes_[v.id].value;
}

template <typename T>
const std::string& Tape<T>::name(Var<T> v) const {
    check_owner(v, "name");
    return nodes_[v.id].op;
}

template <typename T>
bool Tape<T>::requires_grad(Var<T> v) const {
    check_owner(v, "requires_grad");
    return nodes_[v.id].requires_grad;
}

template <typename T>
void Tape<T>::set_value(Var<T> leaf, Tensor<T> value) {
    check_owner(leaf, "set_value");
    Node& node = nodes_[leaf.id];
    if (!node.is_leaf) {
        throw std::invalid_argument("set_value: node '" + node.op + "' is not a leaf");
    }
    if (value.shape() != node.value.shape()) {
        throw ShapeError("set_value: shape " + to_string(value.shape()) + " does not match leaf shape " +
                         to_string(node.value.shape()));
    }
    node.value = std::move(value);
}

template <typename T>
void Tape<T>::replay() {
    for (Node& node : nodes_) {
        if (!node.is_leaf) {
            node.value = evaluate(node);
        }
    }
}

template <typename T>
void Tape<T>::zero_grad() {
    for (auto& g : grads_) g.reset();
}

template <typename T>
void Tape<T>::backward(Var<T> loss, bool retain_intermediate) {
    check_owner(loss, "backward");
    const Node& root = nodes_[loss.id];
    if (root.value.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + to_string(root.value.shape()));
    }
    if (!root.requires_grad) {
        throw std::invalid_argument("backward: loss does not depend on any variable requiring a gradient");
    }
    visit_order_.clear();
    grads_[loss.id] = Tensor<T>::full(root.value.shape(), T{1});

    BackwardContext<T> ctx;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || !grads_[i]) continue;
        if (node.is_leaf) continue;
        visit_order_.push_back(i);
        ctx.grad_out_ = &*grads_[i];
        ctx.output_ = &node.value;
        ctx.inputs_.clear();
        ctx.needs_.clear();
        ctx.slots_.clear();
        for (std::size_t id : node.inputs) {
            ctx.inputs_.push_back(&nodes_[id].value);
            ctx.needs_.push_back(nodes_[id].requires_grad);
            ctx.slots_.push_back(&grads_[id]);
        }
        node.backward(ctx);
        if (!retain_intermediate) {
            grads_[i].reset();
        }
    }
}

template <typename T>
bool Tape<T>::has_grad(Var<T> v) const {
    check_owner(v, "has_grad");
    return grads_[v.id].has_value();
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var<T> v) const {
    check_owner(v, "grad");
    if (!grads_[v.id]) {
        throw std::invalid_argument("grad: node '" + nodes_[v.id].op + "' has no gradient");
    }
    return *grads_[v.id];
}

template <typename T>
Var<T> ParamScope<T>::operator()(const Tensor<T>& param) {
    auto it = vars_.find(&param);
    if (it != vars_.end()) return it->second;
    Var<T> v = tape_->leaf(param, trainable_, "param");
    vars_.emplace(&param, v);
    return v;
}

template <typename T>
Var<T> ParamScope<T>::var(const Tensor<T>& param) const {
    auto it = vars_.find(&param);
    if (it == vars_.end()) {
        throw std::invalid_argument("ParamScope: parameter is not bound to the tape");
    }
    return it->second;
}

template <typename T>
Tensor<T> ParamScope<T>::grad(const Tensor<T>& param) const {
    auto it = vars_.find(&param);
    if (it == vars_.end() || !tape_->has_grad(it->second)) {
        return Tensor<T>::zeros(param.shape());
    }
    return tape_->grad(it->second);
}

template class BackwardContext<float>;
template class BackwardContext<double>;
template class Tape<float>;
template class Tape<double>;
template class ParamScope<float>;
template class ParamScope<double>;

}  // namespace pom
