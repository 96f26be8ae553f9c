#include "metawarm/config_space.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "metawarm/rng.hpp"

namespace metawarm {

using nlohmann::json;

double HPConfig::number(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("config " + std::to_string(config_id) +
                                              ": missing parameter " + name);
    if (const double* d = std::get_if<double>(&it->second)) return *d;
    if (const std::int64_t* i = std::get_if<std::int64_t>(&it->second))
        return static_cast<double>(*i);
    throw ConfigError("parameter " + name + " is not numeric");
}

std::int64_t HPConfig::integer(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("config " + std::to_string(config_id) +
                                              ": missing parameter " + name);
    if (const std::int64_t* i = std::get_if<std::int64_t>(&it->second)) return *i;
    throw ConfigError("parameter " + name + " is not an integer");
}

const std::string& HPConfig::text(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("config " + std::to_string(config_id) +
                                              ": missing parameter " + name);
    if (const std::string* s = std::get_if<std::string>(&it->second)) return *s;
    throw ConfigError("parameter " + name + " is not categorical text");
}

bool HPConfig::flag(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("config " + std::to_string(config_id) +
                                              ": missing parameter " + name);
    if (const bool* b = std::get_if<bool>(&it->second)) return *b;
    throw ConfigError("parameter " + name + " is not a flag");
}

const HPConfig& ConfigPool::by_id(int id) const {
    for (const HPConfig& c : configs)
        if (c.config_id == id) return c;
    throw ConfigError("config id " + std::to_string(id) + " not in pool");
}

namespace {

ParamDef real_param(std::string name, double lo, double hi, bool log_scale) {
    ParamDef p;
    p.name = std::move(name);
    p.kind = log_scale ? ParamKind::LogUniformReal : ParamKind::UniformReal;
    p.lo = lo;
    p.hi = hi;
    return p;
}

ParamDef int_param(std::string name, std::int64_t lo, std::int64_t hi) {
    ParamDef p;
    p.name = std::move(name);
    p.kind = ParamKind::UniformInt;
    p.lo = static_cast<double>(lo);
    p.hi = static_cast<double>(hi);
    return p;
}

ParamDef cat_param(std::string name, std::vector<HPValue> choices) {
    ParamDef p;
    p.name = std::move(name);
    p.kind = ParamKind::Categorical;
    p.choices = std::move(choices);
    return p;
}

}  // namespace

ConfigSpace elasticnet_space() {
    ConfigSpace s;
    s.name = "elasticnet";
    s.params.push_back(real_param("tol", 1e-4, 1e-3, true));
    s.params.push_back(real_param("C", 1e-4, 1e4, true));
    s.params.push_back(cat_param("solver", {std::string("lbfgs"), std::string("liblinear"),
                                            std::string("newton-cg"),
                                            std::string("newton-cholesky"), std::string("sag"),
                                            std::string("saga")}));

    ParamDef intercept = real_param("intercept_scaling", 0.001, 1.0, false);
    intercept.condition = [](const HPConfig& c) { return c.text("solver") == "liblinear"; };
    intercept.condition_label = "solver = liblinear";
    s.params.push_back(std::move(intercept));

    ParamDef pen_liblinear = cat_param("penalty", {std::string("l1"), std::string("l2")});
    pen_liblinear.condition = [](const HPConfig& c) { return c.text("solver") == "liblinear"; };
    pen_liblinear.condition_label = "solver = liblinear";
    s.params.push_back(std::move(pen_liblinear));

    ParamDef dual = cat_param("dual", {true, false});
    dual.condition = [](const HPConfig& c) {
        return c.text("solver") == "liblinear" && c.text("penalty") == "l2";
    };
    dual.condition_label = "solver = liblinear and penalty = l2";
    s.params.push_back(std::move(dual));

    ParamDef pen_saga = cat_param("penalty", {std::string("elasticnet"), std::string("l1"),
                                              std::string("l2"), std::string("null")});
    pen_saga.condition = [](const HPConfig& c) { return c.text("solver") == "saga"; };
    pen_saga.condition_label = "solver = saga";
    s.params.push_back(std::move(pen_saga));

    ParamDef l1_ratio = real_param("l1_ratio", 0.0, 1.0, false);
    l1_ratio.condition = [](const HPConfig& c) { return c.text("solver") == "saga"; };
    l1_ratio.condition_label = "solver = saga";
    s.params.push_back(std::move(l1_ratio));

    ParamDef pen_other = cat_param("penalty", {std::string("l2"), std::string("null")});
    pen_other.condition = [](const HPConfig& c) {
        const std::string& sv = c.text("solver");
        return sv != "saga" && sv != "liblinear";
    };
    pen_other.condition_label = "solver != saga and solver != liblinear";
    s.params.push_back(std::move(pen_other));
    return s;
}

ConfigSpace xgboost_space() {
    ConfigSpace s;
    s.name = "xgboost";
    s.params.push_back(int_param("n_estimators", 1, 1000));
    s.params.push_back(real_param("learning_rate", 0.0, 1.0, false));
    s.params.push_back(cat_param("booster", {std::string("gblinear"), std::string("gbtree")}));
    s.params.push_back(real_param("subsample", 0.5, 1.0, false));
    s.params.push_back(int_param("max_depth", 6, 15));
    s.params.push_back(real_param("min_child_weight", 2.0, 256.0, false));
    s.params.push_back(real_param("colsample_bytree", 0.2, 1.0, false));
    s.params.push_back(real_param("colsample_bylevel", 0.2, 1.0, false));
    return s;
}

ConfigSpace space_by_name(const std::string& name) {
    if (name == "elasticnet") return elasticnet_space();
    if (name == "xgboost") return xgboost_space();
    throw ConfigError("unknown config space: " + name);
}

ConfigPool sample_pool(const ConfigSpace& space, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("sample_pool: need at least one draw");
    Rng rng(seed);
    ConfigPool pool;
    pool.space_name = space.name;
    for (std::size_t i = 0; i < n; ++i) {
        HPConfig cfg;
        cfg.config_id = static_cast<int>(i);
        for (const ParamDef& p : space.params) {
            if (!p.active_in(cfg)) continue;
            switch (p.kind) {
                case ParamKind::UniformReal:
                    cfg.values[p.name] = rng.uniform(p.lo, p.hi);
                    break;
                case ParamKind::LogUniformReal:
                    cfg.values[p.name] = std::exp(rng.uniform(std::log(p.lo), std::log(p.hi)));
                    break;
                case ParamKind::UniformInt:
                    cfg.values[p.name] = rng.uniform_int(static_cast<std::int64_t>(p.lo),
                                                         static_cast<std::int64_t>(p.hi));
                    break;
                case ParamKind::Categorical:
                    cfg.values[p.name] = p.choices[rng.index(p.choices.size())];
                    break;
            }
        }
        pool.configs.push_back(std::move(cfg));
    }
    return pool;
}

namespace {

json hpvalue_to_json(const HPValue& v) {
    if (const double* d = std::get_if<double>(&v)) return *d;
    if (const std::int64_t* i = std::get_if<std::int64_t>(&v)) return *i;
    if (const std::string* s = std::get_if<std::string>(&v)) return *s;
    return std::get<bool>(v);
}

HPValue hpvalue_from_json(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    return j.get<std::string>();
}

}  // namespace

std::string hpvalue_to_string(const HPValue& v) {
    if (const double* d = std::get_if<double>(&v)) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", *d);
        return buf;
    }
    if (const std::int64_t* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const std::string* s = std::get_if<std::string>(&v)) return *s;
    return std::get<bool>(v) ? "true" : "false";
}

void save_pool(const ConfigPool& pool, const std::string& path) {
    json j;
    j["space"] = pool.space_name;
    json configs = json::array();
    for (const HPConfig& c : pool.configs) {
        json assignments = json::object();
        for (const auto& [name, value] : c.values) assignments[name] = hpvalue_to_json(value);
        configs.push_back({{"config_id", c.config_id}, {"assignments", assignments}});
    }
    j["configs"] = configs;
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write pool: " + path);
    out << j.dump(2) << "\n";
}

ConfigPool load_pool(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing pool file: " + path);
    json j = json::parse(in);
    ConfigPool pool;
    pool.space_name = j.at("space").get<std::string>();
    for (const json& c : j.at("configs")) {
        HPConfig cfg;
        cfg.config_id = c.at("config_id").get<int>();
        for (const auto& [name, value] : c.at("assignments").items())
            cfg.values[name] = hpvalue_from_json(value);
        pool.configs.push_back(std::move(cfg));
    }
    return pool;
}

}  // namespace metawarm
