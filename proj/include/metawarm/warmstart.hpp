#pragma once

#include <string>
#include <vector>

#include "metawarm/perf_matrix.hpp"

namespace metawarm {

using EmbeddingTable = std::vector<std::pair<std::string, std::vector<double>>>;

// The k nearest training datasets by L2 distance (ties by id) each contribute
// their best configuration (argmax AUC, ties by config id), nearest first.
// Duplicates are dropped and the list is backfilled from further datasets,
// then from second-best configurations, so k distinct entries come back
// whenever the pool allows.
std::vector<int> knn_warmstart(const std::vector<double>& test_embedding,
                               const EmbeddingTable& train_embeddings,
                               const PerformanceMatrix& matrix, std::size_t k = 10);

// Configurations ordered by how many training datasets they are strictly best
// on (ties by config id); datasets with a tied row maximum credit nobody.
// Backfilled by mean-AUC rank when fewer than k configs were ever credited.
std::vector<int> rank_warmstart(const PerformanceMatrix& matrix, std::size_t k = 10);

}  // namespace metawarm
