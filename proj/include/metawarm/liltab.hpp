#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "metawarm/autodiff.hpp"
#include "metawarm/data_pipeline.hpp"
#include "metawarm/nn.hpp"
#include "metawarm/train.hpp"

namespace metawarm {

// A slice of a dataset handed to an encoder: numeric rows plus binary target.
struct TaskView {
    Tensor features;          // N x I
    std::vector<int> target;  // length N

    std::size_t n_rows() const { return features.rows; }
    std::size_t n_features() const { return features.cols; }
};

TaskView view_of(const Dataset& ds);
TaskView view_of(const Dataset& ds, const std::vector<std::size_t>& rows,
                 const std::vector<std::size_t>& cols);

struct LiltabArch {
    std::size_t hidden_representation_size = 32;  // width of intermediate outputs
    std::size_t n_hidden_layers = 3;
    std::size_t hidden_size = 32;
    double dropout_rate = 0.1;
    std::size_t output_size = 32;  // per-observation embedding width
};

// Set encoder built from six feed-forward networks: per-attribute marginal
// summaries (value path and target path), then per-observation encodings that
// mix attribute values with the marginals.
struct LiltabParams {
    LiltabArch arch;
    MLP f_value, g_value;    // scalar attribute values -> marginal summary
    MLP f_target, g_target;  // scalar targets -> target summary
    MLP f_obs, g_obs;        // [summary, value] rows -> observation embedding

    static LiltabParams init(const LiltabArch& arch, Rng& rng);
    std::vector<Tensor*> parameters();

    void save(const std::string& stem) const;
    static LiltabParams load(const std::string& stem);
};

// Per-attribute marginal summaries nu_bar (I x K) and the target summary
// c_bar (1 x K), each a network applied to the column mean of a value net.
struct MarginalEncoding {
    Tensor nu_bar;
    Tensor c_bar;
};

MarginalEncoding encode_marginals(const TaskView& task, const LiltabParams& params);

// N x p per-observation embeddings built from the marginals.
Tensor encode_observations(const TaskView& task, const MarginalEncoding& marginals,
                           const LiltabParams& params);

// Mean of the per-observation embeddings, dropout disabled.
std::vector<double> embed_dataset(const TaskView& task, const LiltabParams& params);

// Unordered index pairs split by whether the two observations share a source.
struct PairSet {
    std::vector<IndexPair> same;
    std::vector<IndexPair> diff;
};

// Signed mean of pairwise L2 distances: same-source distances count
// positively, different-source distances negatively.
double contrastive_loss(const Tensor& embeddings, const PairSet& pairs);

struct ContrastiveBatch {
    std::vector<TaskView> groups;  // equal row counts, one per source dataset
    std::vector<std::string> group_ids;
    std::size_t rows_per_group = 0;
    PairSet pairs;  // indices into the row-concatenation of groups
};

// Samples rows without replacement from n_datasets datasets (chosen seeded if
// more are offered) and enumerates all observation pairs.
ContrastiveBatch build_contrastive_batch(const std::vector<Dataset>& datasets,
                                         std::size_t n_datasets, std::size_t rows_per_dataset,
                                         Rng& rng);

// Tape-mode observation embeddings for training.
struct BoundLiltab {
    MLP::Bound f_value, g_value, f_target, g_target, f_obs, g_obs;
};
BoundLiltab bind_liltab(Tape& tape, const LiltabParams& params);
Var liltab_observations(Tape& tape, const BoundLiltab& bound, const LiltabParams& params,
                        const TaskView& task, bool training, Rng* rng);

struct LiltabTrainOptions {
    std::size_t n_datasets_per_batch = 4;
};

struct TrainedLiltab {
    LiltabParams params;
    TrainResult result;
};

// Contrastive training: every epoch shuffles the datasets, groups them into
// batches, and takes one Adam step per batch.
TrainedLiltab train_liltab(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                           const LiltabArch& arch, const LiltabTrainOptions& opts = {});

}  // namespace metawarm
