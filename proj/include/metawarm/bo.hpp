#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metawarm/perf_matrix.hpp"
#include "metawarm/tpe.hpp"

namespace metawarm {

struct TraceStep {
    int iteration = 0;  // 1-based, contiguous
    int config_id = -1;
    double raw_auc = 0.0;
    double incumbent_auc = 0.0;  // running max of raw_auc
};

struct OptimizationTrace {
    std::string dataset_id;
    std::string method;
    int fold = 0;
    std::vector<TraceStep> steps;
};

// Surrogate-benchmark Bayesian optimization. The first warm_iters iterations
// consume the warm-start list in order (seeded uniform draws without
// replacement when the list is empty or runs short); the remaining iterations
// come from tpe_propose over everything observed so far. Scores are matrix
// lookups; no config repeats.
OptimizationTrace run_bo(const std::string& dataset_id, const PerformanceMatrix& matrix,
                         const ConfigSpace& space, const ConfigPool& pool,
                         std::vector<int> warmstart, std::size_t total_iters,
                         std::size_t warm_iters, std::uint64_t seed,
                         const std::string& method, int fold, const TpeOptions& tpe = {});

void save_traces_jsonl(const std::vector<OptimizationTrace>& traces, const std::string& path);
std::vector<OptimizationTrace> load_traces_jsonl(const std::string& path);

}  // namespace metawarm
