#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "frap/tensor.hpp"

namespace frap {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is already topologically sorted; backward walks it once in reverse.
/// A tape is used by one thread for one forward/backward pass.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    /// With gradients disabled no backward closures are stored.
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Var constant(Tensor value);
    Var param(const std::string& name, const Tensor& value);

    /// Registers a computed node. `inputs` lists the operand node ids.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
    /// Gradient buffer of a node, allocated on first use.
    Tensor& grad_mut(std::size_t id);
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

    /// Runs the backward sweep from a scalar loss and returns d loss / d param
    /// for every parameter registered on this tape (zeros if unreached).
    ParamSet backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        std::string param_name;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    bool grad_enabled_;
};

/// Parameters placed on a tape, keyed by name.
using ParamVars = std::map<std::string, Var>;
ParamVars place_params(Tape& tape, const ParamSet& params);

// Operators. None of them mutate their inputs.

/// y[..., o] = b[o] + sum_i x[..., i] W[i, o]
Var affine(Var x, Var W, Var b);
/// 1x1 convolution over a [..., P, O, C] volume: the same affine map at every cell.
Var conv1x1(Var x, Var W, Var b);
Var relu(Var x);
Var add(Var a, Var b);
Var mul_elem(Var a, Var b);
Var concat(std::span<const Var> xs, std::size_t axis);
Var concat(std::initializer_list<Var> xs, std::size_t axis);
/// Rows of `table` ([R, L]) selected by `indices`; result shape is lead_shape + [L].
Var embed(Var table, std::vector<int> indices, Shape lead_shape);
/// Selects entries along `axis`; that axis gets extent indices.size().
Var gather(Var x, std::size_t axis, std::vector<int> indices);
Var reshape(Var x, Shape shape);
Var sum_axis(Var x, std::size_t axis);
Var sum_all(Var x);
/// (1/B) sum_b weight_b sum_a mask[b,a] * huber(pred[b,a] - target[b,a]).
/// `weights` may be empty (all ones).
Var huber_loss(Var pred, const Tensor& target, const Tensor& mask, Real delta, const Tensor& weights = {});

}  // namespace frap
