#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "probsa/autodiff/tensor.hpp"

namespace probsa::ad {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape& tape() const { return *tape_; }
    std::size_t index() const noexcept { return index_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

/// Computation record of one forward pass.
///
/// Nodes are appended in execution order, so every node's inputs have a
/// smaller index than the node itself. `backward` walks the record once in
/// reverse and then flushes leaf gradients into the bound parameters.
/// A tape is confined to a single thread.
class Tape {
public:
    /// Propagates the node's output gradient into its inputs' gradients.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) {
        check_finite(value, "constant");
        return push_node(std::move(value), {}, nullptr, nullptr);
    }

    /// Records a parameter. On backward its gradient is accumulated into
    /// `param.grad()` when the parameter requires a gradient.
    Var param(Tensor& param) {
        check_finite(param, "parameter");
        return push_node(Tensor(param.shape(), param.data()), {}, nullptr, param.requires_grad() ? &param : nullptr);
    }

    /// Appends the result of a primitive op.
    Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op_name) {
        check_finite(value, op_name);
        for (auto i : inputs) {
            if (i >= nodes_.size()) throw Error(std::string(op_name) + ": input refers to a future node");
        }
        return push_node(std::move(value), std::move(inputs), std::move(backward), nullptr);
    }

    const Tensor& value(std::size_t i) const { return nodes_.at(i).value; }

    /// Gradient buffer of node `i`, allocated on first use.
    std::vector<double>& grad(std::size_t i) {
        auto& node = nodes_[i];
        if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
        return node.grad;
    }
    bool has_grad(std::size_t i) const { return !nodes_[i].grad.empty(); }

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<std::size_t>& inputs(std::size_t i) const { return nodes_.at(i).inputs; }

    /// Number of backward closures executed by the last call to backward().
    std::size_t backward_visits() const noexcept { return backward_visits_; }

    /// Populates gradients of `loss` (which must be a single-element value)
    /// with respect to every recorded parameter.
    void backward(const Var& loss) {
        if (&loss.tape() != this) throw Error("backward: loss belongs to another tape");
        const auto root = loss.index();
        if (nodes_[root].value.size() != 1) {
            throw ShapeError("backward: loss must be scalar, got " + shape_str(nodes_[root].value.shape()));
        }
        for (auto& n : nodes_) n.grad.clear();
        grad(root)[0] = 1.0;
        backward_visits_ = 0;
        for (std::size_t i = root + 1; i-- > 0;) {
            auto& node = nodes_[i];
            if (node.grad.empty()) continue;
            if (node.backward) {
                node.backward(*this, i);
                ++backward_visits_;
            }
        }
        for (auto& node : nodes_) {
            if (node.bound == nullptr || node.grad.empty()) continue;
            auto g = node.bound->grad();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += node.grad[k];
        }
    }

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Tensor* bound = nullptr;
        std::vector<double> grad;
    };

    static void check_finite(const Tensor& t, const char* what) {
        if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + what);
    }

    Var push_node(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, Tensor* bound) {
        nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), bound, {}});
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::size_t backward_visits_ = 0;
};

inline const Tensor& Var::value() const { return tape_->value(index_); }

}  // namespace probsa::ad
