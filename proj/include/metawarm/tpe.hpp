#pragma once

#include <utility>
#include <vector>

#include "metawarm/config_space.hpp"

namespace metawarm {

struct TpeOptions {
    double gamma_quantile = 0.25;      // fraction of observations in the good set
    double bandwidth_floor_frac = 1e-3;  // of the dimension's range
    double laplace = 1.0;              // categorical smoothing
};

// Splits the observations into good (top ceil(gamma*m) by AUC) and bad sets,
// fits per-dimension kernel densities (Gaussian for numeric dimensions,
// Laplace-smoothed frequencies for categorical ones), and returns the
// unobserved pool config maximizing the good/bad density ratio. Inactive
// dimensions contribute likelihood 1. Ties break toward the lower config id.
int tpe_propose(const std::vector<std::pair<int, double>>& observed, const ConfigPool& pool,
                const ConfigSpace& space, const TpeOptions& opts = {});

}  // namespace metawarm
