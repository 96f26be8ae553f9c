#pragma once

#include <cstdint>
#include <vector>

#include "metawarm/data_pipeline.hpp"

namespace metawarm {

// Gaussian-mixture corpus for experiments without external data. Each dataset
// gets its own center at distance ~separation from the origin and two class
// clouds offset along a dataset-specific direction; higher separation means
// datasets are easier to tell apart.
struct SyntheticSpec {
    std::size_t n_datasets = 20;
    std::size_t rows = 120;        // per dataset, classes balanced
    std::size_t features = 10;
    double separation = 4.0;       // between dataset centers
    double class_gap = 2.0;        // between the two classes of one dataset
    double noise = 1.0;
    std::uint64_t seed = 0;
};

std::vector<Dataset> make_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace metawarm
