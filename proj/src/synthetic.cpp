#include "metawarm/synthetic.hpp"

#include <cmath>
#include <string>

#include "metawarm/errors.hpp"
#include "metawarm/rng.hpp"

namespace metawarm {

std::vector<Dataset> make_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.n_datasets == 0 || spec.rows < 2 || spec.features == 0)
        throw ConfigError("make_synthetic_corpus: degenerate corpus spec");

    Rng rng(spec.seed);
    std::vector<Dataset> out;
    for (std::size_t d = 0; d < spec.n_datasets; ++d) {
        std::vector<double> center(spec.features);
        for (double& v : center) v = rng.normal();
        double norm = 0.0;
        for (double v : center) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : center) v = norm > 0.0 ? v / norm * spec.separation : 0.0;

        std::vector<double> offset(spec.features);
        for (double& v : offset) v = rng.normal();
        norm = 0.0;
        for (double v : offset) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : offset) v = norm > 0.0 ? v / norm * spec.class_gap / 2.0 : 0.0;

        Dataset ds;
        ds.id = "synth" + std::to_string(d);
        ds.features = Tensor(spec.rows, spec.features, 0.0);
        ds.target.resize(spec.rows);
        for (std::size_t c = 0; c < spec.features; ++c)
            ds.feature_names.push_back("x" + std::to_string(c));
        for (std::size_t r = 0; r < spec.rows; ++r) {
            const int y = r % 2 == 0 ? 1 : 0;  // exactly balanced
            ds.target[r] = y;
            const double sign = y == 1 ? 1.0 : -1.0;
            for (std::size_t c = 0; c < spec.features; ++c)
                ds.features.at(r, c) = center[c] + sign * offset[c] + spec.noise * rng.normal();
        }
        out.push_back(std::move(ds));
    }
    return out;
}

}  // namespace metawarm
