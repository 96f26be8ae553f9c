#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "metawarm/bo.hpp"
#include "metawarm/data_pipeline.hpp"
#include "metawarm/liltab.hpp"
#include "metawarm/perf_matrix.hpp"

namespace metawarm {

// Per-iteration mean distance to the row optimum, on min-max-scaled AUC.
struct AdtmReport {
    std::string method;
    std::vector<double> mean_dtm;                      // length T, mean over datasets
    std::map<int, std::vector<double>> per_fold_dtm;   // fold -> mean over its datasets
};

// DTM trajectory of a single trace: 1 - running best of the min-max-scaled
// AUC. Throws for constant matrix rows.
std::vector<double> dtm_trajectory(const OptimizationTrace& trace,
                                   const PerformanceMatrix& matrix);

AdtmReport adtm(const std::vector<OptimizationTrace>& traces, const PerformanceMatrix& matrix);

struct ProbeReport {
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double ch_mean = 0.0;
    double ch_std = 0.0;
    std::size_t repetitions = 0;
};

using EmbedFn = std::function<std::vector<double>(const TaskView&)>;

// Balanced same/different pairs of row+column-subsampled views; a pair is
// predicted "same" when exp(-gamma * distance) > 0.5. Mean and standard
// deviation of the accuracy over the repetitions.
ProbeReport pair_accuracy_probe(const EmbedFn& embed, const std::vector<Dataset>& datasets,
                                std::size_t n_pairs, std::size_t repetitions, double gamma,
                                std::uint64_t seed);

// Between/within scatter ratio normalized by degrees of freedom; +inf when
// the within scatter is zero.
double calinski_harabasz(const std::vector<std::vector<double>>& embeddings,
                         const std::vector<int>& labels);

// Adds a seeded views-per-dataset CH probe to an existing report.
void ch_probe(ProbeReport& report, const EmbedFn& embed, const std::vector<Dataset>& datasets,
              std::size_t views_per_dataset, std::size_t repetitions, std::uint64_t seed);

struct FriedmanResult {
    double statistic = 0.0;
    std::vector<double> mean_ranks;  // one per method
};

// scores: methods x blocks. Within each block methods are ranked (average
// ranks on ties); the statistic is 12N/(k(k+1)) * (sum R_j^2 - k(k+1)^2/4).
FriedmanResult friedman_test(const std::vector<std::vector<double>>& scores,
                             bool lower_is_better);

// Critical distance q_alpha(k) * sqrt(k(k+1)/(6N)) for alpha in {0.05, 0.10},
// k in 2..10.
double nemenyi_cd(std::size_t k, std::size_t n_blocks, double alpha);

struct FoldSummary {
    std::vector<double> mean;
    std::vector<double> ci_half_width;  // 1.96 * sd / sqrt(#folds)
};

FoldSummary aggregate_folds(const std::vector<std::vector<double>>& fold_trajectories);

// First two principal components (M x 2) of row-vector embeddings.
std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& embeddings);

}  // namespace metawarm
