#include "metawarm/nn.hpp"

#include <cmath>

#include "metawarm/errors.hpp"

namespace metawarm {

MLP MLP::make(std::vector<std::size_t> sizes, double dropout, Rng& rng, bool relu_out) {
    if (sizes.size() < 2) throw ConfigError("MLP: need at least input and output sizes");
    for (std::size_t s : sizes)
        if (s == 0) throw ConfigError("MLP: zero-width layer");
    MLP net;
    net.layer_sizes = std::move(sizes);
    net.dropout_rate = dropout;
    net.relu_on_output = relu_out;
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        const std::size_t fan_in = net.layer_sizes[l];
        const std::size_t fan_out = net.layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Tensor w(fan_in, fan_out, 0.0);
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(1, fan_out, 0.0);
    }
    return net;
}

namespace {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.cols != w.rows) throw ConfigError("MLP forward: input width mismatch");
    Tensor y(x.rows, w.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double v = x.at(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < w.cols; ++j) y.at(i, j) += v * w.at(k, j);
        }
    for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = 0; j < y.cols; ++j) y.at(i, j) += b.at(0, j);
    return y;
}

}  // namespace

Tensor MLP::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        h = affine(h, weights[l], biases[l]);
        const bool hidden = l + 1 < n_layers();
        if (hidden || relu_on_output)
            for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    return h;
}

Tensor MLP::forward(const Tensor& x, bool training, Rng& rng) const {
    Tensor h = x;
    const double keep = 1.0 - dropout_rate;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        h = affine(h, weights[l], biases[l]);
        const bool hidden = l + 1 < n_layers();
        if (hidden || relu_on_output)
            for (double& v : h.data) v = v > 0.0 ? v : 0.0;
        if (hidden && training && dropout_rate > 0.0)
            for (double& v : h.data) v = (rng.uniform() < keep) ? v / keep : 0.0;
    }
    return h;
}

std::vector<Tensor*> MLP::parameters() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

std::vector<const Tensor*> MLP::parameters() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

MLP::Bound MLP::bind(Tape& tape) const {
    Bound b;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        b.weights.push_back(tape.leaf(weights[l]));
        b.biases.push_back(tape.leaf(biases[l]));
    }
    return b;
}

Var MLP::forward(Tape& tape, const Bound& bound, Var x, bool training, Rng* rng) const {
    Var h = x;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        h = tape.add(tape.matmul(h, bound.weights[l]), bound.biases[l]);
        const bool hidden = l + 1 < n_layers();
        if (hidden || relu_on_output) h = tape.relu(h);
        if (hidden && training && dropout_rate > 0.0) {
            if (!rng) throw ConfigError("MLP forward: training mode needs an rng");
            h = tape.dropout(h, dropout_rate, *rng);
        }
    }
    return h;
}

void collect_parameters(MLP& net, std::vector<Tensor*>& out) {
    for (Tensor* p : net.parameters()) out.push_back(p);
}

}  // namespace metawarm
