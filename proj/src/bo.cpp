#include "metawarm/bo.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "metawarm/errors.hpp"
#include "metawarm/rng.hpp"

namespace metawarm {

using nlohmann::json;

OptimizationTrace run_bo(const std::string& dataset_id, const PerformanceMatrix& matrix,
                         const ConfigSpace& space, const ConfigPool& pool,
                         std::vector<int> warmstart, std::size_t total_iters,
                         std::size_t warm_iters, std::uint64_t seed,
                         const std::string& method, int fold, const TpeOptions& tpe) {
    const std::size_t row = matrix.row_of(dataset_id);
    if (total_iters > pool.size())
        throw ConfigError("run_bo: more iterations than pool configs");
    if (warm_iters > total_iters) throw ConfigError("run_bo: warm_iters exceeds total_iters");
    for (int cid : warmstart) pool.by_id(cid);  // validates membership
    if (warmstart.size() > warm_iters) {
        std::cerr << "warning: warm-start list truncated to " << warm_iters << " entries\n";
        warmstart.resize(warm_iters);
    }

    // Pre-shuffled pool order supplies uniform no-replacement random draws.
    Rng rng(seed);
    std::vector<int> random_order;
    for (const HPConfig& c : pool.configs) random_order.push_back(c.config_id);
    rng.shuffle(random_order);
    std::size_t random_cursor = 0;

    OptimizationTrace trace;
    trace.dataset_id = dataset_id;
    trace.method = method;
    trace.fold = fold;

    std::set<int> observed_ids;
    std::vector<std::pair<int, double>> observed;
    std::size_t warm_cursor = 0;
    double incumbent = 0.0;

    auto next_random = [&]() {
        while (random_cursor < random_order.size() &&
               observed_ids.count(random_order[random_cursor]))
            ++random_cursor;
        if (random_cursor >= random_order.size())
            throw ConfigError("run_bo: pool exhausted");
        return random_order[random_cursor++];
    };

    for (std::size_t it = 1; it <= total_iters; ++it) {
        int cid = -1;
        if (it <= warm_iters) {
            while (warm_cursor < warmstart.size() && observed_ids.count(warmstart[warm_cursor]))
                ++warm_cursor;
            cid = warm_cursor < warmstart.size() ? warmstart[warm_cursor++] : next_random();
        } else {
            cid = observed.size() < 2 ? next_random() : tpe_propose(observed, pool, space, tpe);
        }

        const double auc = matrix.auc[row][matrix.col_of(cid)];
        observed_ids.insert(cid);
        observed.emplace_back(cid, auc);
        incumbent = observed.size() == 1 ? auc : std::max(incumbent, auc);

        TraceStep step;
        step.iteration = static_cast<int>(it);
        step.config_id = cid;
        step.raw_auc = auc;
        step.incumbent_auc = incumbent;
        trace.steps.push_back(step);
    }
    return trace;
}

void save_traces_jsonl(const std::vector<OptimizationTrace>& traces, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write traces: " + path);
    for (const OptimizationTrace& t : traces)
        for (const TraceStep& s : t.steps) {
            json j{{"dataset_id", t.dataset_id}, {"method", t.method},   {"fold", t.fold},
                   {"iteration", s.iteration},   {"config_id", s.config_id},
                   {"raw_auc", s.raw_auc},       {"incumbent_auc", s.incumbent_auc}};
            out << j.dump() << "\n";
        }
}

std::vector<OptimizationTrace> load_traces_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing traces file: " + path);
    std::vector<OptimizationTrace> traces;
    auto find_trace = [&](const std::string& dataset_id, const std::string& method,
                          int fold) -> OptimizationTrace& {
        for (OptimizationTrace& t : traces)
            if (t.dataset_id == dataset_id && t.method == method && t.fold == fold) return t;
        traces.push_back(OptimizationTrace{dataset_id, method, fold, {}});
        return traces.back();
    };
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        OptimizationTrace& t = find_trace(j.at("dataset_id").get<std::string>(),
                                          j.at("method").get<std::string>(),
                                          j.at("fold").get<int>());
        TraceStep s;
        s.iteration = j.at("iteration").get<int>();
        s.config_id = j.at("config_id").get<int>();
        s.raw_auc = j.at("raw_auc").get<double>();
        s.incumbent_auc = j.at("incumbent_auc").get<double>();
        t.steps.push_back(s);
    }
    for (OptimizationTrace& t : traces)
        std::sort(t.steps.begin(), t.steps.end(),
                  [](const TraceStep& a, const TraceStep& b) { return a.iteration < b.iteration; });
    return traces;
}

}  // namespace metawarm
