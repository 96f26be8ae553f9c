#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metawarm/config_space.hpp"
#include "metawarm/evaluators.hpp"

namespace metawarm {

// Dataset x configuration ROC-AUC table: the surrogate benchmark every
// optimizer consults. Rows whose entries are all equal are flagged because
// min-max scaling is undefined for them.
struct PerformanceMatrix {
    std::vector<std::string> dataset_ids;
    std::vector<int> config_ids;
    std::vector<std::vector<double>> auc;  // |datasets| x |configs|

    std::size_t row_of(const std::string& dataset_id) const;
    std::size_t col_of(int config_id) const;
    double at(const std::string& dataset_id, int config_id) const;
    bool row_constant(std::size_t row) const;
    std::vector<std::string> flagged_constant_rows() const;
};

using TaskEvaluator = std::function<double(const EvalTask&, const HPConfig&, std::uint64_t)>;

// Evaluates every (task, config) cell, in parallel up to `jobs` threads.
// Tasks whose evaluator fails are dropped with a warning on stderr.
PerformanceMatrix build_matrix(const std::vector<EvalTask>& tasks, const ConfigPool& pool,
                               const TaskEvaluator& evaluator, std::uint64_t seed,
                               std::size_t jobs = 1);

// CSV: header "dataset_id,<config ids...>", doubles at full precision so a
// save/load round-trip is bit-identical.
void save_matrix(const PerformanceMatrix& m, const std::string& path);
PerformanceMatrix load_matrix(const std::string& path);

// Rows restricted to the given dataset ids, in the given order.
PerformanceMatrix submatrix(const PerformanceMatrix& m, const std::vector<std::string>& ids);

}  // namespace metawarm
