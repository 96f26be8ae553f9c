#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metawarm/config_space.hpp"
#include "metawarm/data_pipeline.hpp"
#include "metawarm/tensor.hpp"

namespace metawarm {

// One benchmark unit: a feature matrix with designated train and validation
// rows. Column selection has already been applied.
struct EvalTask {
    std::string id;
    Tensor features;
    std::vector<int> target;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
};

EvalTask make_eval_task(const Dataset& parent, const FewShotTask& task);

// Probability that a random positive outscores a random negative, ties
// counted one half.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Regularized logistic regression fitted with accelerated proximal gradient
// descent; returns ROC-AUC on the validation rows.
double eval_elasticnet(const EvalTask& task, const HPConfig& config);

// Gradient boosting on log-loss: depth-limited regression trees (gbtree) or
// additive linear updates (gblinear); returns ROC-AUC on the validation rows.
double eval_gbt(const EvalTask& task, const HPConfig& config, std::uint64_t seed);

}  // namespace metawarm
