#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pom/tensor.hpp"

namespace pom {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// View handed to a backward rule: the recorded inputs and output of one node,
/// the incoming gradient, and slots to accumulate input gradients into.
template <typename T>
class BackwardContext {
public:
    const Tensor<T>& grad_output() const { return *grad_out_; }
    const Tensor<T>& output() const { return *output_; }
    const Tensor<T>& input(std::size_t i) const { return *inputs_[i]; }
    std::size_t input_count() const { return inputs_.size(); }
    bool needs_grad(std::size_t i) const { return needs_[i]; }

    /// Adds `g` into the gradient of input i. No-op if that input needs no gradient.
    void accumulate(std::size_t i, Tensor<T> g);

private:
    friend class Tape<T>;
    const Tensor<T>* grad_out_ = nullptr;
    const Tensor<T>* output_ = nullptr;
    std::vector<const Tensor<T>*> inputs_;
    std::vector<bool> needs_;
    std::vector<std::optional<Tensor<T>>*> slots_;
};

template <typename T>
using ForwardFn = std::function<Tensor<T>(std::span<const Tensor<T>* const>)>;
template <typename T>
using BackwardFn = std::function<void(BackwardContext<T>&)>;

/// Reverse-mode tape over whole-tensor primitives.
///
/// Nodes are appended in evaluation order, so index order is a topological
/// order and backward walks indices downwards. Every node keeps its forward
/// rule, which lets replay() re-evaluate the graph after leaf values change.
/// Backward rules read tensors only through BackwardContext; anything they
/// capture must be non-differentiable configuration.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value, bool requires_grad = true, std::string name = {});
    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    Var<T> apply(std::string_view op, std::vector<Var<T>> inputs, ForwardFn<T> forward, BackwardFn<T> backward);

    const Tensor<T>& value(Var<T> v) const;
    const std::string& name(Var<T> v) const;

    /// Replaces a leaf value. Call replay() to propagate.
    void set_value(Var<T> leaf, Tensor<T> value);

    /// Re-evaluates every non-leaf node from current leaf values.
    void replay();

    /// Accumulates d(loss)/d(node) for every node that requires a gradient.
    /// Gradients of intermediate nodes are released unless `retain_intermediate`.
    void backward(Var<T> loss, bool retain_intermediate = false);

    bool has_grad(Var<T> v) const;
    /// Gradient of `v` after backward(). Throws if `v` belongs to another tape
    /// or received no gradient.
    const Tensor<T>& grad(Var<T> v) const;

    void zero_grad();

    std::size_t size() const { return nodes_.size(); }
    bool requires_grad(Var<T> v) const;
    /// Node indices in the order the last backward() visited them.
    const std::vector<std::size_t>& last_backward_order() const { return visit_order_; }

    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
    bool grad_enabled() const { return grad_enabled_; }
    /// When on (default), every recorded output is checked for NaN/Inf.
    void set_check_finite(bool enabled) { check_finite_ = enabled; }

private:
    struct Node {
        std::string op;
        Tensor<T> value;
        std::vector<std::size_t> inputs;
        ForwardFn<T> forward;
        BackwardFn<T> backward;
        bool requires_grad = false;
        bool is_leaf = false;
    };

    void check_owner(Var<T> v, const char* what) const;
    Tensor<T> evaluate(const Node& node) const;

    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor<T>>> grads_;
    std::vector<std::size_t> visit_order_;
    bool grad_enabled_ = true;
    bool check_finite_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(*this);
}

/// Binds model parameters (identified by address) to leaves of one tape, so a
/// forward pass can look them up and the caller can read gradients back.
template <typename T>
class ParamScope {
public:
    explicit ParamScope(Tape<T>& tape, bool trainable = true) : tape_(&tape), trainable_(trainable) {}

    Var<T> operator()(const Tensor<T>& param);
    Tape<T>& tape() const { return *tape_; }
    bool trainable() const { return trainable_; }
    bool bound(const Tensor<T>& param) const { return vars_.count(&param) != 0; }
    Var<T> var(const Tensor<T>& param) const;

    /// Gradient of a bound parameter; zeros when it received none.
    Tensor<T> grad(const Tensor<T>& param) const;

private:
    Tape<T>* tape_;
    bool trainable_;
    std::unordered_map<const Tensor<T>*, Var<T>> vars_;
};

}  // namespace pom
