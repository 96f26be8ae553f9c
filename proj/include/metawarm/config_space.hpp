#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "metawarm/errors.hpp"

namespace metawarm {

using HPValue = std::variant<double, std::int64_t, std::string, bool>;

// One sampled configuration. Parameters whose condition did not hold are
// absent from the map.
struct HPConfig {
    int config_id = -1;
    std::map<std::string, HPValue> values;

    bool has(const std::string& name) const { return values.count(name) > 0; }

    double number(const std::string& name) const;
    std::int64_t integer(const std::string& name) const;
    const std::string& text(const std::string& name) const;
    bool flag(const std::string& name) const;
};

enum class ParamKind { UniformReal, LogUniformReal, UniformInt, Categorical };

// A parameter row: name, distribution, and an optional activation condition
// over previously sampled parameters. The same name may appear in several
// rows with mutually exclusive conditions.
struct ParamDef {
    std::string name;
    ParamKind kind = ParamKind::UniformReal;
    double lo = 0.0, hi = 0.0;      // numeric kinds
    std::vector<HPValue> choices;   // categorical
    std::function<bool(const HPConfig&)> condition;  // empty = always active
    std::string condition_label;

    bool active_in(const HPConfig& cfg) const { return !condition || condition(cfg); }
};

struct ConfigSpace {
    std::string name;
    std::vector<ParamDef> params;
};

struct ConfigPool {
    std::string space_name;
    std::vector<HPConfig> configs;

    std::size_t size() const { return configs.size(); }
    const HPConfig& by_id(int id) const;
};

// The regularized-logistic-regression search grid, including the
// solver-conditional penalty rows.
ConfigSpace elasticnet_space();
// The gradient-boosting search grid.
ConfigSpace xgboost_space();
ConfigSpace space_by_name(const std::string& name);

// n independent seeded draws; loguniform sampled as exp(uniform in log space);
// duplicates permitted; config ids are 0..n-1.
ConfigPool sample_pool(const ConfigSpace& space, std::size_t n, std::uint64_t seed);

void save_pool(const ConfigPool& pool, const std::string& path);
ConfigPool load_pool(const std::string& path);

std::string hpvalue_to_string(const HPValue& v);

}  // namespace metawarm
