#include "metawarm/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "metawarm/errors.hpp"

namespace metawarm {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

// Parameter value on the scale densities are fitted on (log for loguniform).
double numeric_value(const ParamDef& def, const HPConfig& cfg) {
    const double v = def.kind == ParamKind::UniformInt
                         ? static_cast<double>(cfg.integer(def.name))
                         : cfg.number(def.name);
    return def.kind == ParamKind::LogUniformReal ? std::log(v) : v;
}

double dimension_range(const ParamDef& def) {
    if (def.kind == ParamKind::LogUniformReal) return std::log(def.hi) - std::log(def.lo);
    return def.hi - def.lo;
}

// Gaussian KDE with a Scott-style bandwidth floored at a fraction of the
// dimension's range.
double kde_density(const std::vector<double>& values, double x, double range, double floor_frac) {
    const double m = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= m;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= m;
    const double bw = std::max(1.06 * std::sqrt(var) * std::pow(m, -0.2), floor_frac * range);
    double density = 0.0;
    for (double v : values) {
        const double z = (x - v) / bw;
        density += kInvSqrt2Pi / bw * std::exp(-0.5 * z * z);
    }
    return density / m;
}

double categorical_density(const std::vector<const HPConfig*>& set, const ParamDef& def,
                           const HPConfig& candidate, double laplace) {
    std::size_t active = 0, matches = 0;
    const std::string want = hpvalue_to_string(candidate.values.at(def.name));
    for (const HPConfig* cfg : set) {
        if (!cfg->has(def.name) || !def.active_in(*cfg)) continue;
        ++active;
        if (hpvalue_to_string(cfg->values.at(def.name)) == want) ++matches;
    }
    if (active == 0) return 1.0;
    return (static_cast<double>(matches) + laplace) /
           (static_cast<double>(active) + laplace * static_cast<double>(def.choices.size()));
}

double numeric_log_density(const std::vector<const HPConfig*>& set, const ParamDef& def,
                           const HPConfig& candidate, const TpeOptions& opts) {
    std::vector<double> values;
    for (const HPConfig* cfg : set)
        if (cfg->has(def.name) && def.active_in(*cfg)) values.push_back(numeric_value(def, *cfg));
    if (values.empty()) return 0.0;  // likelihood 1
    const double x = numeric_value(def, candidate);
    const double d = kde_density(values, x, dimension_range(def), opts.bandwidth_floor_frac);
    return std::log(std::max(d, 1e-300));
}

}  // namespace

int tpe_propose(const std::vector<std::pair<int, double>>& observed, const ConfigPool& pool,
                const ConfigSpace& space, const TpeOptions& opts) {
    if (observed.size() < 2) throw ConfigError("tpe_propose: need at least 2 observations");

    std::set<int> seen;
    for (const auto& [cid, auc] : observed) seen.insert(cid);
    std::vector<const HPConfig*> candidates;
    for (const HPConfig& cfg : pool.configs)
        if (!seen.count(cfg.config_id)) candidates.push_back(&cfg);
    if (candidates.empty()) throw ConfigError("tpe_propose: every pool config observed");
    std::sort(candidates.begin(), candidates.end(),
              [](const HPConfig* a, const HPConfig* b) { return a->config_id < b->config_id; });

    // Sort by AUC descending (ties by config id) and split at ceil(gamma*m).
    std::vector<std::pair<int, double>> sorted = observed;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t n_good = static_cast<std::size_t>(
        std::ceil(opts.gamma_quantile * static_cast<double>(sorted.size())));

    std::vector<const HPConfig*> good, bad;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const HPConfig* cfg = &pool.by_id(sorted[i].first);
        (i < n_good ? good : bad).push_back(cfg);
    }

    int best_id = -1;
    double best_score = 0.0;
    for (const HPConfig* cand : candidates) {
        double log_ratio = 0.0;
        for (const ParamDef& def : space.params) {
            if (!cand->has(def.name) || !def.active_in(*cand)) continue;
            if (def.kind == ParamKind::Categorical) {
                log_ratio += std::log(categorical_density(good, def, *cand, opts.laplace));
                log_ratio -= std::log(categorical_density(bad, def, *cand, opts.laplace));
            } else {
                log_ratio += numeric_log_density(good, def, *cand, opts);
                log_ratio -= numeric_log_density(bad, def, *cand, opts);
            }
        }
        if (best_id < 0 || log_ratio > best_score) {
            best_id = cand->config_id;
            best_score = log_ratio;
        }
    }
    return best_id;
}

}  // namespace metawarm
