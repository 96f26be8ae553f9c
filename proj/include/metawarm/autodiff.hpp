#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "metawarm/rng.hpp"
#include "metawarm/tensor.hpp"

namespace metawarm {

// Handle to a node on a Tape. Cheap to copy, valid for the tape's lifetime.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

using IndexPair = std::pair<std::size_t, std::size_t>;

// Reverse-mode automatic differentiation over Tensors. Nodes are appended in
// topological order, so backward() is a single reverse sweep. One tape per
// loss evaluation; tapes are not reusable across steps.
class Tape {
public:
    // Leaf without gradient tracking (inputs, constants).
    Var constant(Tensor value);
    // Leaf with gradient tracking (parameters).
    Var leaf(Tensor value);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

    Var matmul(Var a, Var b);
    // Same shape, or b a 1xC bias row broadcast over a's rows.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    // Elementwise product, same shape.
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var relu(Var a);
    Var exp(Var a);
    Var log(Var a);
    // Gradient passes only strictly inside (lo, hi).
    Var clamp(Var a, double lo, double hi);
    Var sum_all(Var a);
    Var mean_all(Var a);
    // 1xC mean of all rows.
    Var mean_over_rows(Var a);
    // (R/group)xC mean of consecutive row groups of length `group`.
    Var group_mean_rows(Var a, std::size_t group);
    Var concat_cols(Var a, Var b);
    Var concat_rows(const std::vector<Var>& parts);
    // Stack `times` copies of a vertically.
    Var tile_rows(Var a, std::size_t times);
    Var reshape(Var a, std::size_t r, std::size_t c);
    Var row(Var a, std::size_t i);
    // Frobenius norm as a scalar; subgradient 0 at the origin.
    Var l2_norm(Var a);
    Var sum_list(const std::vector<Var>& scalars);
    // Sum over pairs (i, j) of ||row_i - row_j||_2 of an MxP matrix.
    Var pair_distance_sum(Var a, const std::vector<IndexPair>& pairs);
    // Inverted dropout; mask drawn from rng, fixed at node creation.
    Var dropout(Var a, double rate, Rng& rng);

    // Seeds d(loss)=1 and sweeps the tape in reverse. Loss must be 1x1.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves/constants
    };

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
    Tensor& grad_ref(Var v) { return nodes_[v.id].grad; }
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    std::vector<Node> nodes_;
};

// Convenience wrapper: backward pass, then gradients of the given leaves.
std::vector<Tensor> gradients(Tape& tape, Var loss, const std::vector<Var>& leaves);

}  // namespace metawarm
