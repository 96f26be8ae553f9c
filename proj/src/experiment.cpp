#include "metawarm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "metawarm/bo.hpp"
#include "metawarm/d2v.hpp"
#include "metawarm/errors.hpp"
#include "metawarm/liltab.hpp"
#include "metawarm/metrics.hpp"
#include "metawarm/synthetic.hpp"
#include "metawarm/warmstart.hpp"

namespace metawarm {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config ---------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing config file: " + path);
    try {
        return ExperimentConfig(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

const json* ExperimentConfig::find(const std::string& dotted) const {
    const json* cur = &doc_;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &(*cur)[part];
    }
    return cur;
}

bool ExperimentConfig::has(const std::string& dotted) const { return find(dotted) != nullptr; }

void ExperimentConfig::set(const std::string& dotted, json value) {
    json* cur = &doc_;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!cur->contains(parts[i]) || !(*cur)[parts[i]].is_object())
            (*cur)[parts[i]] = json::object();
        cur = &(*cur)[parts[i]];
    }
    (*cur)[parts.back()] = std::move(value);
}

template <typename T>
T ExperimentConfig::require(const std::string& dotted) const {
    const json* j = find(dotted);
    if (!j) throw ConfigError("missing config key: " + dotted);
    try {
        return j->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key has the wrong type: " + dotted);
    }
}

template std::string ExperimentConfig::require<std::string>(const std::string&) const;
template std::size_t ExperimentConfig::require<std::size_t>(const std::string&) const;
template double ExperimentConfig::require<double>(const std::string&) const;

std::uint64_t ExperimentConfig::seed() const {
    if (const char* env = std::getenv("METAWARM_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError("METAWARM_SEED is not an unsigned integer");
        return v;
    }
    return get<std::uint64_t>("seed", 0);
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const MissingArtifactError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    return 1;
}

// --- shared helpers --------------------------------------------------------

namespace {

std::vector<std::string> csv_files_in(const std::string& input) {
    std::vector<std::string> files;
    if (fs::is_directory(input)) {
        for (const fs::directory_entry& e : fs::directory_iterator(input))
            if (e.path().extension() == ".csv") files.push_back(e.path().string());
    } else if (fs::exists(input)) {
        files.push_back(input);
    } else {
        throw MissingArtifactError("input path does not exist: " + input);
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw MissingArtifactError("no CSV files under " + input);
    return files;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw MissingArtifactError("cannot create directory " + dir + ": " + ec.message());
}

std::map<std::string, Dataset> dataset_index(const std::vector<Dataset>& datasets) {
    std::map<std::string, Dataset> idx;
    for (const Dataset& ds : datasets) idx[ds.id] = ds;
    return idx;
}

LiltabArch liltab_arch_from(const ExperimentConfig& cfg) {
    LiltabArch a;
    a.hidden_representation_size =
        cfg.get<std::size_t>("encoder.liltab.hidden_representation_size", 32);
    a.n_hidden_layers = cfg.get<std::size_t>("encoder.liltab.n_hidden_layers", 3);
    a.hidden_size = cfg.get<std::size_t>("encoder.liltab.hidden_size", 32);
    a.dropout_rate = cfg.get<double>("encoder.liltab.dropout_rate", 0.1);
    a.output_size = cfg.get<std::size_t>("encoder.liltab.output_size",
                                         a.hidden_representation_size);
    return a;
}

TrainConfig liltab_train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.num_epochs = cfg.get<std::size_t>("encoder.liltab.num_epochs", 100000);
    t.learning_rate = cfg.get<double>("encoder.liltab.learning_rate", 1e-4);
    t.weight_decay = cfg.get<double>("encoder.liltab.weight_decay", 0.0);
    t.batch_size = cfg.get<std::size_t>("encoder.liltab.batch_size", 37);
    t.early_stopping_epochs = cfg.get<std::size_t>("encoder.liltab.early_stopping_epochs", 2500);
    t.seed = cfg.seed();
    return t;
}

D2VArch d2v_arch_from(const ExperimentConfig& cfg) {
    D2VArch a;
    a.gamma = cfg.get<double>("encoder.d2v.gamma", 1.0);
    a.f_dense_hidden_size = cfg.get<std::size_t>("encoder.d2v.f_dense_hidden_size", 16);
    a.f_res_hidden_size = cfg.get<std::size_t>("encoder.d2v.f_res_hidden_size", 16);
    a.f_res_n_hidden = cfg.get<std::size_t>("encoder.d2v.f_res_n_hidden", 3);
    a.f_dense_out_hidden_size = cfg.get<std::size_t>("encoder.d2v.f_dense_out_hidden_size", 16);
    a.f_block_repetitions = cfg.get<std::size_t>("encoder.d2v.f_block_repetitions", 3);
    a.g_layers_sizes =
        cfg.get<std::vector<std::size_t>>("encoder.d2v.g_layers_sizes", {32, 16, 8});
    a.h_dense_hidden_size = cfg.get<std::size_t>("encoder.d2v.h_dense_hidden_size", 32);
    a.h_res_hidden_size = cfg.get<std::size_t>("encoder.d2v.h_res_hidden_size", 32);
    a.h_res_n_hidden = cfg.get<std::size_t>("encoder.d2v.h_res_n_hidden", 3);
    a.h_dense_out_hidden_size = cfg.get<std::size_t>("encoder.d2v.h_dense_out_hidden_size", 16);
    a.h_block_repetitions = cfg.get<std::size_t>("encoder.d2v.h_block_repetitions", 3);
    a.train_n_batches = cfg.get<std::size_t>("encoder.d2v.train_n_batches", 100);
    return a;
}

TrainConfig d2v_train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.num_epochs = cfg.get<std::size_t>("encoder.d2v.num_epochs", 100000);
    t.learning_rate = cfg.get<double>("encoder.d2v.learning_rate", 1e-3);
    t.weight_decay = cfg.get<double>("encoder.d2v.weight_decay", 1e-4);
    t.batch_size = cfg.get<std::size_t>("encoder.d2v.batch_size", 16);
    t.early_stopping_epochs = cfg.get<std::size_t>("encoder.d2v.early_stopping_epochs", 500);
    t.seed = cfg.seed();
    return t;
}

void write_loss_history(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write loss history: " + path);
    out << "epoch,loss\n";
    char buf[40];
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", result.loss_history[i]);
        out << i << "," << buf << "\n";
    }
}

TpeOptions tpe_options_from(const ExperimentConfig& cfg) {
    TpeOptions t;
    t.gamma_quantile = cfg.get<double>("tpe.gamma_quantile", 0.25);
    t.bandwidth_floor_frac = cfg.get<double>("tpe.bandwidth_floor_frac", 1e-3);
    t.laplace = cfg.get<double>("tpe.laplace", 1.0);
    return t;
}

}  // namespace

std::vector<Dataset> load_prepared_datasets(const std::string& dir) {
    std::vector<Dataset> out;
    for (const std::string& path : csv_files_in(dir)) out.push_back(load_csv(path));
    std::sort(out.begin(), out.end(),
              [](const Dataset& a, const Dataset& b) { return a.id < b.id; });
    return out;
}

void save_embeddings_csv(const std::vector<EmbeddingRow>& rows, const std::string& path) {
    if (rows.empty()) throw ConfigError("no embeddings to write");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write embeddings: " + path);
    out << "task_id,parent_id";
    for (std::size_t c = 0; c < rows.front().values.size(); ++c) out << ",e" << c;
    out << "\n";
    char buf[40];
    for (const EmbeddingRow& row : rows) {
        out << row.task_id << "," << row.parent_id;
        for (double v : row.values) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

std::vector<EmbeddingRow> load_embeddings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing embeddings file: " + path);
    std::vector<EmbeddingRow> rows;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty embeddings file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        EmbeddingRow row;
        std::getline(ss, row.task_id, ',');
        std::getline(ss, row.parent_id, ',');
        while (std::getline(ss, cell, ','))
            row.values.push_back(std::strtod(cell.c_str(), nullptr));
        rows.push_back(std::move(row));
    }
    return rows;
}

// --- commands ---------------------------------------------------------------

void cmd_synth(const ExperimentConfig& cfg) {
    SyntheticSpec spec;
    spec.n_datasets = cfg.get<std::size_t>("synth.n_datasets", 20);
    spec.rows = cfg.get<std::size_t>("synth.rows", 120);
    spec.features = cfg.get<std::size_t>("synth.features", 10);
    spec.separation = cfg.get<double>("synth.separation", 4.0);
    spec.class_gap = cfg.get<double>("synth.class_gap", 2.0);
    spec.noise = cfg.get<double>("synth.noise", 1.0);
    spec.seed = cfg.seed();
    const std::string out_dir = cfg.require<std::string>("synth.output");
    ensure_dir(out_dir);
    for (const Dataset& ds : make_synthetic_corpus(spec))
        save_dataset_csv(ds, (fs::path(out_dir) / (ds.id + ".csv")).string());
}

void cmd_prepare(const ExperimentConfig& cfg) {
    const std::string input = cfg.require<std::string>("data.input");
    const std::string output = cfg.require<std::string>("data.output");
    const std::string binarize = cfg.get<std::string>("prepare.binarize", "auto");
    const bool fewshot = cfg.get<bool>("prepare.fewshot", true);
    const std::uint64_t seed = cfg.seed();
    ensure_dir(output);

    json provenance;
    provenance["seed"] = seed;
    json filtered = json::array();
    json binarized = json::array();
    std::vector<FewShotTask> all_tasks;
    std::size_t input_count = 0, kept = 0;

    for (const std::string& path : csv_files_in(input)) {
        ++input_count;
        RawDataset raw = load_csv_raw(path);
        Dataset ds;
        if (binarize == "never" || (binarize == "auto" && has_binary_target(raw))) {
            ds = as_binary(raw);
        } else {
            ds = regression_to_binary(raw, seed ^ stable_hash(raw.id));
            binarized.push_back(ds.id);
        }
        if (!filter_eligible(ds)) {
            filtered.push_back(ds.id);
            continue;
        }
        ds = standardize(ds);
        save_dataset_csv(ds, (fs::path(output) / (ds.id + ".csv")).string());
        ++kept;
        if (fewshot) {
            std::vector<FewShotTask> tasks =
                generate_fewshot_tasks(ds, seed ^ stable_hash(ds.id + "/tasks"));
            all_tasks.insert(all_tasks.end(), tasks.begin(), tasks.end());
        }
    }
    if (kept == 0) throw ConfigError("prepare: every dataset was filtered out");

    if (fewshot)
        save_tasks_jsonl(all_tasks, (fs::path(output) / "tasks.jsonl").string());
    provenance["input_count"] = input_count;
    provenance["kept"] = kept;
    provenance["filtered_out"] = filtered;
    provenance["binarized"] = binarized;
    provenance["task_count"] = all_tasks.size();
    std::ofstream pf((fs::path(output) / "provenance.json").string());
    pf << provenance.dump(2) << "\n";
}

void cmd_train_encoder(const ExperimentConfig& cfg) {
    const std::string choice = cfg.require<std::string>("encoder.choice");
    const std::string data_dir = cfg.require<std::string>("data.output");
    const std::string stem = cfg.require<std::string>("encoder.params");
    const std::vector<Dataset> datasets = load_prepared_datasets(data_dir);

    if (choice == "liltab") {
        LiltabTrainOptions opts;
        opts.n_datasets_per_batch =
            cfg.get<std::size_t>("encoder.liltab.n_datasets_per_batch", 4);
        TrainedLiltab trained =
            train_liltab(datasets, liltab_train_config(cfg), liltab_arch_from(cfg), opts);
        trained.params.save(stem);
        write_loss_history(trained.result, stem + "_loss.csv");
    } else if (choice == "d2v") {
        TrainedD2V trained = train_d2v(datasets, d2v_train_config(cfg), d2v_arch_from(cfg));
        trained.params.save(stem);
        write_loss_history(trained.result, stem + "_loss.csv");
    } else {
        throw ConfigError("unknown encoder: " + choice);
    }
}

void cmd_embed(const ExperimentConfig& cfg) {
    const std::string choice = cfg.require<std::string>("encoder.choice");
    const std::string stem = cfg.require<std::string>("encoder.params");
    const std::string data_dir = cfg.require<std::string>("data.output");
    const std::string tasks_path =
        cfg.get<std::string>("embed.tasks", (fs::path(data_dir) / "tasks.jsonl").string());
    const std::string out_path = cfg.require<std::string>("embed.output");

    const std::vector<FewShotTask> tasks = load_tasks_jsonl(tasks_path);
    const std::map<std::string, Dataset> datasets =
        dataset_index(load_prepared_datasets(data_dir));

    EmbedFn embed;
    LiltabParams liltab;
    D2VParams d2v;
    if (choice == "liltab") {
        liltab = LiltabParams::load(stem);
        embed = [&liltab](const TaskView& v) { return embed_dataset(v, liltab); };
    } else if (choice == "d2v") {
        d2v = D2VParams::load(stem);
        embed = [&d2v](const TaskView& v) { return d2v_embed(v, d2v); };
    } else {
        throw ConfigError("unknown encoder: " + choice);
    }

    std::vector<EmbeddingRow> rows;
    for (const FewShotTask& task : tasks) {
        auto it = datasets.find(task.parent_id);
        if (it == datasets.end())
            throw MissingArtifactError("task parent dataset not prepared: " + task.parent_id);
        // Warm-start embeddings read the task's validation rows.
        const TaskView view = view_of(it->second, task.val_rows, task.selected_features);
        rows.push_back(EmbeddingRow{task.task_id, task.parent_id, embed(view)});
    }
    save_embeddings_csv(rows, out_path);
}

namespace {

std::vector<EvalTask> eval_tasks_from(const std::string& data_dir,
                                      const std::string& tasks_path) {
    const std::vector<FewShotTask> tasks = load_tasks_jsonl(tasks_path);
    const std::map<std::string, Dataset> datasets =
        dataset_index(load_prepared_datasets(data_dir));
    std::vector<EvalTask> out;
    for (const FewShotTask& task : tasks) {
        auto it = datasets.find(task.parent_id);
        if (it == datasets.end())
            throw MissingArtifactError("task parent dataset not prepared: " + task.parent_id);
        out.push_back(make_eval_task(it->second, task));
    }
    return out;
}

}  // namespace

void cmd_build_matrix(const ExperimentConfig& cfg) {
    const std::string data_dir = cfg.require<std::string>("data.output");
    const std::string tasks_path =
        cfg.get<std::string>("embed.tasks", (fs::path(data_dir) / "tasks.jsonl").string());
    const std::string model = cfg.get<std::string>("matrix.model", "elasticnet");
    const std::size_t pool_size = cfg.get<std::size_t>("matrix.pool_size", 100);
    const std::string pool_path = cfg.require<std::string>("matrix.pool_output");
    const std::string matrix_path = cfg.require<std::string>("matrix.output");
    const std::size_t jobs = cfg.get<std::size_t>("jobs", 1);
    const std::uint64_t seed = cfg.seed();

    if (model != "gbt" && model != "elasticnet")
        throw ConfigError("unknown model: " + model);
    const ConfigSpace space = model == "gbt" ? xgboost_space() : elasticnet_space();

    const ConfigPool pool = sample_pool(space, pool_size, seed);
    save_pool(pool, pool_path);

    TaskEvaluator evaluator;
    if (model == "elasticnet") {
        evaluator = [](const EvalTask& t, const HPConfig& c, std::uint64_t) {
            return eval_elasticnet(t, c);
        };
    } else {
        evaluator = [](const EvalTask& t, const HPConfig& c, std::uint64_t s) {
            return eval_gbt(t, c, s);
        };
    }

    const std::vector<EvalTask> tasks = eval_tasks_from(data_dir, tasks_path);
    const PerformanceMatrix matrix = build_matrix(tasks, pool, evaluator, seed, jobs);
    save_matrix(matrix, matrix_path);
}

void cmd_run(const ExperimentConfig& cfg) {
    const std::string matrix_path = cfg.require<std::string>("run.matrix");
    const std::string pool_path = cfg.require<std::string>("run.pool");
    const std::string out_path = cfg.require<std::string>("run.output");
    const std::size_t folds_k = cfg.get<std::size_t>("run.folds", 5);
    const std::size_t total_iters = cfg.get<std::size_t>("run.total_iters", 30);
    const std::size_t warm_iters = cfg.get<std::size_t>("run.warm_iters", 10);
    const std::size_t k_nearest = cfg.get<std::size_t>("run.k_nearest", 10);
    const std::vector<std::string> strategies = cfg.get<std::vector<std::string>>(
        "run.strategies", {"encoder-knn", "rank", "random"});
    const std::size_t jobs = cfg.get<std::size_t>("jobs", 1);
    const std::uint64_t seed = cfg.seed();
    const TpeOptions tpe = tpe_options_from(cfg);

    if (warm_iters > total_iters)
        throw ConfigError("run: warm_iters must not exceed total_iters");

    const PerformanceMatrix matrix = load_matrix(matrix_path);
    const ConfigPool pool = load_pool(pool_path);
    if (total_iters > pool.size())
        throw ConfigError("run: total_iters exceeds the pool size");
    const ConfigSpace space = space_by_name(pool.space_name);

    const bool need_embeddings =
        std::find(strategies.begin(), strategies.end(), "encoder-knn") != strategies.end();
    std::map<std::string, std::vector<double>> embeddings;
    if (need_embeddings) {
        if (!cfg.has("run.embeddings"))
            throw MissingArtifactError("run: strategy encoder-knn needs run.embeddings");
        const std::string emb_path = cfg.require<std::string>("run.embeddings");
        for (const EmbeddingRow& row : load_embeddings_csv(emb_path))
            embeddings[row.task_id] = row.values;
    }

    // Constant rows cannot be min-max scaled; leave them out of the protocol.
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < matrix.dataset_ids.size(); ++r) {
        if (matrix.row_constant(r)) {
            std::cerr << "warning: skipping constant-row dataset " << matrix.dataset_ids[r]
                      << "\n";
            continue;
        }
        ids.push_back(matrix.dataset_ids[r]);
    }

    struct Job {
        std::string dataset_id;
        std::string method;
        int fold;
        std::vector<int> warm;
    };
    std::vector<Job> all_jobs;
    for (const FoldSplit& fold : make_folds(ids, folds_k, seed)) {
        PerformanceMatrix train_matrix = submatrix(matrix, fold.train_ids);
        EmbeddingTable train_embeddings;
        if (need_embeddings)
            for (const std::string& id : fold.train_ids) {
                auto it = embeddings.find(id);
                if (it == embeddings.end())
                    throw MissingArtifactError("run: no embedding for dataset " + id);
                train_embeddings.emplace_back(id, it->second);
            }

        std::vector<int> rank_list;
        for (const std::string& strategy : strategies)
            if (strategy == "rank") rank_list = rank_warmstart(train_matrix, k_nearest);

        for (const std::string& test_id : fold.test_ids)
            for (const std::string& strategy : strategies) {
                Job job;
                job.dataset_id = test_id;
                job.method = strategy;
                job.fold = static_cast<int>(fold.fold_index);
                if (strategy == "encoder-knn") {
                    auto it = embeddings.find(test_id);
                    if (it == embeddings.end())
                        throw MissingArtifactError("run: no embedding for dataset " + test_id);
                    job.warm = knn_warmstart(it->second, train_embeddings, train_matrix,
                                             k_nearest);
                } else if (strategy == "rank") {
                    job.warm = rank_list;
                } else if (strategy == "random") {
                    job.warm = {};
                } else {
                    throw ConfigError("unknown strategy: " + strategy);
                }
                all_jobs.push_back(std::move(job));
            }
    }

    std::vector<OptimizationTrace> traces(all_jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= all_jobs.size()) return;
            const Job& job = all_jobs[k];
            const std::uint64_t job_seed =
                seed ^ stable_hash(job.dataset_id + "|" + job.method + "|" +
                                   std::to_string(job.fold));
            traces[k] = run_bo(job.dataset_id, matrix, space, pool, job.warm, total_iters,
                               warm_iters, job_seed, job.method, job.fold, tpe);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    save_traces_jsonl(traces, out_path);
}

void cmd_report(const ExperimentConfig& cfg) {
    const std::string traces_path = cfg.require<std::string>("report.traces");
    const std::string matrix_path = cfg.require<std::string>("report.matrix");
    const std::string out_dir = cfg.require<std::string>("report.output");
    const double alpha = cfg.get<double>("report.alpha", 0.05);
    ensure_dir(out_dir);

    const PerformanceMatrix matrix = load_matrix(matrix_path);
    const std::vector<OptimizationTrace> traces = load_traces_jsonl(traces_path);
    if (traces.empty()) throw ConfigError("report: no traces");

    std::vector<std::string> methods;
    for (const OptimizationTrace& t : traces)
        if (std::find(methods.begin(), methods.end(), t.method) == methods.end())
            methods.push_back(t.method);
    std::sort(methods.begin(), methods.end());

    json report;
    std::map<std::string, AdtmReport> adtm_by_method;
    for (const std::string& method : methods) {
        std::vector<OptimizationTrace> subset;
        for (const OptimizationTrace& t : traces)
            if (t.method == method) subset.push_back(t);
        adtm_by_method[method] = adtm(subset, matrix);
    }

    const std::size_t t_len = adtm_by_method.begin()->second.mean_dtm.size();
    const std::size_t friedman_iter =
        std::min<std::size_t>(cfg.get<std::size_t>("report.friedman_iteration", t_len), t_len);

    // ADTM section + plot data.
    {
        std::ofstream plot((fs::path(out_dir) / "adtm_plot.csv").string());
        plot << "iteration,method,mean,ci_half_width\n";
        char buf[40];
        for (const std::string& method : methods) {
            const AdtmReport& rep = adtm_by_method[method];
            json jm;
            jm["mean_dtm"] = rep.mean_dtm;
            std::vector<std::vector<double>> fold_curves;
            for (const auto& [fold, curve] : rep.per_fold_dtm) {
                jm["per_fold"][std::to_string(fold)] = curve;
                fold_curves.push_back(curve);
            }
            if (fold_curves.size() >= 2) {
                const FoldSummary summary = aggregate_folds(fold_curves);
                jm["fold_mean"] = summary.mean;
                jm["fold_ci_half_width"] = summary.ci_half_width;
                for (std::size_t i = 0; i < summary.mean.size(); ++i) {
                    plot << (i + 1) << "," << method << ",";
                    std::snprintf(buf, sizeof buf, "%.17g", summary.mean[i]);
                    plot << buf << ",";
                    std::snprintf(buf, sizeof buf, "%.17g", summary.ci_half_width[i]);
                    plot << buf << "\n";
                }
            }
            report["adtm"][method] = jm;
        }
    }

    // Friedman over (dataset, fold) blocks at the chosen iteration.
    {
        std::map<std::pair<std::string, int>, std::map<std::string, double>> blocks;
        for (const OptimizationTrace& t : traces) {
            const std::vector<double> dtm = dtm_trajectory(t, matrix);
            blocks[{t.dataset_id, t.fold}][t.method] = dtm[friedman_iter - 1];
        }
        std::vector<std::vector<double>> scores(methods.size());
        for (const auto& [key, by_method] : blocks) {
            if (by_method.size() != methods.size()) continue;  // incomplete block
            for (std::size_t m = 0; m < methods.size(); ++m)
                scores[m].push_back(by_method.at(methods[m]));
        }
        if (!scores.empty() && scores.front().size() >= 2) {
            const FriedmanResult fr = friedman_test(scores, /*lower_is_better=*/true);
            report["friedman"]["iteration"] = friedman_iter;
            report["friedman"]["statistic"] = fr.statistic;
            for (std::size_t m = 0; m < methods.size(); ++m)
                report["friedman"]["mean_ranks"][methods[m]] = fr.mean_ranks[m];
            report["friedman"]["blocks"] = scores.front().size();
            report["nemenyi_cd"] =
                nemenyi_cd(methods.size(), scores.front().size(), alpha);
        }
    }

    // 2-D projection of the embeddings, when provided.
    if (cfg.has("report.embeddings")) {
        const std::vector<EmbeddingRow> rows =
            load_embeddings_csv(cfg.require<std::string>("report.embeddings"));
        std::vector<std::vector<double>> points;
        for (const EmbeddingRow& row : rows) points.push_back(row.values);
        const std::vector<std::array<double, 2>> projected = pca_2d(points);
        std::ofstream pf((fs::path(out_dir) / "embeddings_pca.csv").string());
        pf << "task_id,origin,pc1,pc2\n";
        char buf[40];
        for (std::size_t i = 0; i < rows.size(); ++i) {
            pf << rows[i].task_id << "," << rows[i].parent_id << ",";
            std::snprintf(buf, sizeof buf, "%.17g", projected[i][0]);
            pf << buf << ",";
            std::snprintf(buf, sizeof buf, "%.17g", projected[i][1]);
            pf << buf << "\n";
        }
    }

    // Optional representation-quality probe.
    if (cfg.has("report.probe.encoder")) {
        const std::string choice = cfg.require<std::string>("report.probe.encoder");
        const std::string stem = cfg.require<std::string>("report.probe.params");
        const std::string data_dir = cfg.require<std::string>("report.probe.data");
        const std::size_t n_pairs = cfg.get<std::size_t>("report.probe.n_pairs", 50);
        const std::size_t repetitions = cfg.get<std::size_t>("report.probe.repetitions", 15);
        const std::size_t views = cfg.get<std::size_t>("report.probe.views", 5);
        const std::vector<Dataset> datasets = load_prepared_datasets(data_dir);

        EmbedFn embed;
        double gamma = 1.0;
        LiltabParams liltab;
        D2VParams d2v;
        if (choice == "liltab") {
            liltab = LiltabParams::load(stem);
            embed = [&liltab](const TaskView& v) { return embed_dataset(v, liltab); };
        } else if (choice == "d2v") {
            d2v = D2VParams::load(stem);
            gamma = d2v.arch.gamma;
            embed = [&d2v](const TaskView& v) { return d2v_embed(v, d2v); };
        } else {
            throw ConfigError("unknown probe encoder: " + choice);
        }
        ProbeReport probe =
            pair_accuracy_probe(embed, datasets, n_pairs, repetitions, gamma, cfg.seed());
        ch_probe(probe, embed, datasets, views, repetitions, cfg.seed() + 1);
        report["probe"] = {{"accuracy_mean", probe.accuracy_mean},
                           {"accuracy_std", probe.accuracy_std},
                           {"ch_mean", probe.ch_mean},
                           {"ch_std", probe.ch_std},
                           {"repetitions", probe.repetitions}};
    }

    std::ofstream jf((fs::path(out_dir) / "report.json").string());
    jf << report.dump(2) << "\n";

    // Aligned-column text rendering.
    std::ofstream tf((fs::path(out_dir) / "report.txt").string());
    tf << "method                mean DTM @ final iteration\n";
    char buf[64];
    for (const std::string& method : methods) {
        const AdtmReport& rep = adtm_by_method[method];
        std::snprintf(buf, sizeof buf, "%-20s  %.6f\n", method.c_str(), rep.mean_dtm.back());
        tf << buf;
    }
    if (report.contains("friedman")) {
        std::snprintf(buf, sizeof buf, "friedman statistic    %.6f\n",
                      report["friedman"]["statistic"].get<double>());
        tf << buf;
        std::snprintf(buf, sizeof buf, "nemenyi CD (a=%.2f)   %.6f\n", alpha,
                      report["nemenyi_cd"].get<double>());
        tf << buf;
    }
    if (report.contains("probe")) {
        std::snprintf(buf, sizeof buf, "probe accuracy        %.4f +- %.4f\n",
                      report["probe"]["accuracy_mean"].get<double>(),
                      report["probe"]["accuracy_std"].get<double>());
        tf << buf;
        std::snprintf(buf, sizeof buf, "probe CH index        %.4f +- %.4f\n",
                      report["probe"]["ch_mean"].get<double>(),
                      report["probe"]["ch_std"].get<double>());
        tf << buf;
    }
}

}  // namespace metawarm
