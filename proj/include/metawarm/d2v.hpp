#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metawarm/autodiff.hpp"
#include "metawarm/liltab.hpp"
#include "metawarm/nn.hpp"
#include "metawarm/train.hpp"

namespace metawarm {

struct D2VArch {
    double gamma = 1.0;  // scaling factor of the metric-based classifier
    std::size_t f_dense_hidden_size = 16;
    std::size_t f_res_hidden_size = 16;
    std::size_t f_res_n_hidden = 3;
    std::size_t f_dense_out_hidden_size = 16;
    std::size_t f_block_repetitions = 3;
    std::vector<std::size_t> g_layers_sizes = {32, 16, 8};
    std::size_t h_dense_hidden_size = 32;
    std::size_t h_res_hidden_size = 32;
    std::size_t h_res_n_hidden = 3;
    std::size_t h_dense_out_hidden_size = 16;
    std::size_t h_block_repetitions = 3;
    std::size_t train_n_batches = 100;  // batches per epoch
};

// Affine entry adapter, residual blocks (relu chains with skip additions),
// affine exit adapter.
struct ResidualStage {
    MLP entry;
    std::vector<MLP> blocks;
    MLP exit;

    static ResidualStage make(std::size_t in, std::size_t width, std::size_t block_hidden,
                              std::size_t block_layers, std::size_t repetitions, std::size_t out,
                              Rng& rng);
    Tensor forward(const Tensor& x) const;
    struct Bound {
        MLP::Bound entry;
        std::vector<MLP::Bound> blocks;
        MLP::Bound exit;
    };
    Bound bind(Tape& tape) const;
    Var forward(Tape& tape, const Bound& bound, Var x) const;
    void collect(std::vector<Tensor*>& out);
};

// DeepSet dataset encoder: f over (value, target) pairs, mean over rows,
// g per attribute, mean over attributes, h to the final embedding.
struct D2VParams {
    D2VArch arch;
    ResidualStage stage_f;  // input width 2
    MLP stage_g;
    ResidualStage stage_h;

    static D2VParams init(const D2VArch& arch, Rng& rng);
    std::vector<Tensor*> parameters();
    std::size_t embedding_size() const { return arch.h_dense_out_hidden_size; }

    void save(const std::string& stem) const;
    static D2VParams load(const std::string& stem);
};

std::vector<double> d2v_embed(const TaskView& task, const D2VParams& params);

// exp(-gamma * ||e1 - e2||_2), in (0, 1].
double same_dataset_probability(const std::vector<double>& e1, const std::vector<double>& e2,
                                double gamma);

// Two subsampled views labeled by whether they come from the same dataset.
struct BatchPair {
    TaskView a;
    TaskView b;
    bool same_origin = false;
};

// Draws a row subset of size uniform in [8, 32] (capped by N) and a column
// subset of size uniform in [1, I] from the given dataset.
TaskView sample_view(const Dataset& ds, Rng& rng);
BatchPair sample_batch_pair(const std::vector<Dataset>& datasets, bool same_origin, Rng& rng);

// Mean binary cross-entropy of same_dataset_probability over the pairs,
// probabilities clamped to [1e-12, 1 - 1e-12].
double d2v_loss(const std::vector<BatchPair>& pairs, const D2VParams& params);

struct BoundD2V {
    ResidualStage::Bound f;
    MLP::Bound g;
    ResidualStage::Bound h;
};
BoundD2V bind_d2v(Tape& tape, const D2VParams& params);
Var d2v_embedding_var(Tape& tape, const BoundD2V& bound, const D2VParams& params,
                      const TaskView& task);
Var d2v_loss_var(Tape& tape, const BoundD2V& bound, const D2VParams& params,
                 const std::vector<BatchPair>& pairs);

struct TrainedD2V {
    D2VParams params;
    TrainResult result;
};

// Metric-based same-dataset classification: each epoch draws train_n_batches
// batches of batch_size pairs, half same-origin by construction.
TrainedD2V train_d2v(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                     const D2VArch& arch);

}  // namespace metawarm
