#pragma once

#include <cstddef>
#include <vector>

#include "metawarm/autodiff.hpp"
#include "metawarm/rng.hpp"
#include "metawarm/tensor.hpp"

namespace metawarm {

// Feed-forward network: affine -> relu (-> dropout in training) per hidden
// layer, affine output. layer_sizes = {input, hidden..., output}. Setting
// relu_on_output makes the final affine also pass through relu, which the
// residual blocks need.
struct MLP {
    std::vector<std::size_t> layer_sizes;
    std::vector<Tensor> weights;  // per layer, in x out
    std::vector<Tensor> biases;   // per layer, 1 x out
    double dropout_rate = 0.0;
    bool relu_on_output = false;

    // Uniform fan-in initialization, biases zero.
    static MLP make(std::vector<std::size_t> sizes, double dropout, Rng& rng,
                    bool relu_on_output = false);

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t n_layers() const { return weights.size(); }

    // Evaluation-mode forward (dropout is the identity).
    Tensor forward(const Tensor& x) const;
    // Training-mode forward outside a tape; masks drawn from rng.
    Tensor forward(const Tensor& x, bool training, Rng& rng) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

    // Tape-mode forward for training.
    struct Bound {
        std::vector<Var> weights;
        std::vector<Var> biases;
    };
    Bound bind(Tape& tape) const;
    Var forward(Tape& tape, const Bound& bound, Var x, bool training, Rng* rng) const;
};

// Appends net's parameters (pointers) to out, layer by layer.
void collect_parameters(MLP& net, std::vector<Tensor*>& out);

}  // namespace metawarm
