#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metawarm/tensor.hpp"

namespace metawarm {

// Numeric feature matrix with a binary target.
struct Dataset {
    std::string id;
    Tensor features;          // N x I
    std::vector<int> target;  // length N, values 0/1
    std::vector<std::string> feature_names;

    std::size_t n_rows() const { return features.rows; }
    std::size_t n_features() const { return features.cols; }
};

// Loader output before binarization: real-valued target.
struct RawDataset {
    std::string id;
    Tensor features;
    std::vector<double> target;
    std::vector<std::string> feature_names;

    std::size_t n_rows() const { return features.rows; }
    std::size_t n_features() const { return features.cols; }
};

// A 33-row fragment of a parent dataset: 4 training rows, 29 validation rows,
// 10 selected feature columns.
struct FewShotTask {
    std::string parent_id;
    std::string task_id;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
    std::vector<std::size_t> selected_features;
};

struct FoldSplit {
    std::size_t fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

// CSV contract: header row, comma separator, "." decimal point, final column
// is the target, everything numeric, no missing cells.
RawDataset load_csv_raw(const std::string& path);
// As load_csv_raw, but requires the target column to be 0/1 already.
Dataset load_csv(const std::string& path);
void save_dataset_csv(const Dataset& ds, const std::string& path);

// Label = 1 iff the raw target is above its mean, then the majority class is
// subsampled (seeded) so both classes have equal counts.
Dataset regression_to_binary(const RawDataset& ds, std::uint64_t seed);

// True when the target column is already only 0s and 1s.
bool has_binary_target(const RawDataset& ds);
Dataset as_binary(const RawDataset& ds);

// Column-wise zero mean, unit population standard deviation; zero-variance
// columns become all-zeros.
Dataset standardize(const Dataset& ds);

// Size filter: at most 10000 rows and 20 features.
bool filter_eligible(const Dataset& ds);

// Deterministic quartile binning used by the feature scorer: thresholds are
// the sorted values at positions N/4, N/2, 3N/4; bin(v) = number of
// thresholds strictly below v.
std::vector<int> quartile_bins(const std::vector<double>& values);

// Top-k feature indices by mutual information between the quartile-binned
// feature and the binary target, ties broken toward the lower index.
std::vector<std::size_t> select_top_features(const Dataset& ds, std::size_t k = 10);

// Partitions the dataset into disjoint 33-row tasks: 2 rows per class in
// train, validation filled 15/14 per class with the 15-side alternating.
std::vector<FewShotTask> generate_fewshot_tasks(const Dataset& ds, std::uint64_t seed);

// Seeded shuffle, then k near-equal contiguous test blocks.
std::vector<FoldSplit> make_folds(const std::vector<std::string>& ids, std::size_t k,
                                  std::uint64_t seed);

// Task manifests as JSON lines, one task per line.
void save_tasks_jsonl(const std::vector<FewShotTask>& tasks, const std::string& path);
std::vector<FewShotTask> load_tasks_jsonl(const std::string& path);

}  // namespace metawarm
