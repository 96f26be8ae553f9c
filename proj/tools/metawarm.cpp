// metawarm: encoder-based warm-starting of hyperparameter optimization on
// tabular datasets. Subcommands cover the whole pipeline: synth -> prepare ->
// train-encoder -> embed -> build-matrix -> run -> report.

#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metawarm/experiment.hpp"

using metawarm::ExperimentConfig;
using nlohmann::json;

namespace {

struct PendingOverride {
    std::string key;
    json value;
};

// Every flag writes into the config document, so flags and config files share
// one set of dotted keys.
class FlagSink {
public:
    explicit FlagSink(std::vector<PendingOverride>& sink) : sink_(sink) {}

    void add_string(CLI::App* app, const std::string& flag, const std::string& key,
                    const std::string& desc) {
        app->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { sink_.push_back({key, v}); }, desc);
    }
    void add_size(CLI::App* app, const std::string& flag, const std::string& key,
                  const std::string& desc) {
        app->add_option_function<std::size_t>(
            flag, [this, key](std::size_t v) { sink_.push_back({key, v}); }, desc);
    }
    void add_double(CLI::App* app, const std::string& flag, const std::string& key,
                    const std::string& desc) {
        app->add_option_function<double>(
            flag, [this, key](double v) { sink_.push_back({key, v}); }, desc);
    }
    void add_bool(CLI::App* app, const std::string& flag, const std::string& key,
                  const std::string& desc) {
        app->add_flag_function(
            flag, [this, key](std::int64_t v) { sink_.push_back({key, v > 0}); }, desc);
    }
    void add_strings(CLI::App* app, const std::string& flag, const std::string& key,
                     const std::string& desc) {
        app->add_option_function<std::vector<std::string>>(
            flag, [this, key](const std::vector<std::string>& v) { sink_.push_back({key, v}); },
            desc)
            ->delimiter(',');
    }

private:
    std::vector<PendingOverride>& sink_;
};

void add_encoder_flags(CLI::App* app, FlagSink& sink) {
    sink.add_string(app, "--encoder", "encoder.choice", "encoder: liltab or d2v");
    sink.add_string(app, "--params", "encoder.params", "parameter file stem");
    // liltab architecture and training, named after its hyperparameter table
    sink.add_size(app, "--num-epochs", "encoder.liltab.num_epochs", "maximum epochs (liltab)");
    sink.add_double(app, "--learning-rate", "encoder.liltab.learning_rate", "learning rate (liltab)");
    sink.add_double(app, "--weight-decay", "encoder.liltab.weight_decay", "weight decay (liltab)");
    sink.add_size(app, "--batch-size", "encoder.liltab.batch_size", "batch size (liltab)");
    sink.add_size(app, "--early-stopping-epochs", "encoder.liltab.early_stopping_epochs",
                  "patience in epochs (liltab)");
    sink.add_size(app, "--hidden-representation-size",
                  "encoder.liltab.hidden_representation_size",
                  "intermediate output width (liltab)");
    sink.add_size(app, "--n-hidden-layers", "encoder.liltab.n_hidden_layers",
                  "hidden layers per network (liltab)");
    sink.add_size(app, "--hidden-size", "encoder.liltab.hidden_size",
                  "hidden layer width (liltab)");
    sink.add_double(app, "--dropout-rate", "encoder.liltab.dropout_rate", "dropout rate (liltab)");
    sink.add_size(app, "--output-size", "encoder.liltab.output_size",
                  "embedding width (liltab)");
    sink.add_size(app, "--n-datasets-per-batch", "encoder.liltab.n_datasets_per_batch",
                  "datasets mixed into one batch (liltab)");
    // d2v knobs, named after its hyperparameter table
    sink.add_double(app, "--gamma", "encoder.d2v.gamma", "metric classification scale (d2v)");
    sink.add_size(app, "--d2v-num-epochs", "encoder.d2v.num_epochs", "maximum epochs (d2v)");
    sink.add_double(app, "--d2v-learning-rate", "encoder.d2v.learning_rate", "learning rate (d2v)");
    sink.add_double(app, "--d2v-weight-decay", "encoder.d2v.weight_decay", "weight decay (d2v)");
    sink.add_size(app, "--d2v-batch-size", "encoder.d2v.batch_size", "pairs per batch (d2v)");
    sink.add_size(app, "--train-n-batches", "encoder.d2v.train_n_batches",
                  "batches per epoch (d2v)");
    sink.add_size(app, "--d2v-early-stopping-epochs", "encoder.d2v.early_stopping_epochs",
                  "patience in epochs (d2v)");
    sink.add_size(app, "--f-dense-hidden-size", "encoder.d2v.f_dense_hidden_size",
                  "first stage width (d2v)");
    sink.add_size(app, "--f-res-hidden-size", "encoder.d2v.f_res_hidden_size",
                  "first stage block width (d2v)");
    sink.add_size(app, "--f-res-n-hidden", "encoder.d2v.f_res_n_hidden",
                  "first stage block depth (d2v)");
    sink.add_size(app, "--f-dense-out-hidden-size", "encoder.d2v.f_dense_out_hidden_size",
                  "first stage output width (d2v)");
    sink.add_size(app, "--f-block-repetitions", "encoder.d2v.f_block_repetitions",
                  "first stage block count (d2v)");
    sink.add_size(app, "--h-dense-hidden-size", "encoder.d2v.h_dense_hidden_size",
                  "third stage width (d2v)");
    sink.add_size(app, "--h-res-hidden-size", "encoder.d2v.h_res_hidden_size",
                  "third stage block width (d2v)");
    sink.add_size(app, "--h-res-n-hidden", "encoder.d2v.h_res_n_hidden",
                  "third stage block depth (d2v)");
    sink.add_size(app, "--h-dense-out-hidden-size", "encoder.d2v.h_dense_out_hidden_size",
                  "embedding width (d2v)");
    sink.add_size(app, "--h-block-repetitions", "encoder.d2v.h_block_repetitions",
                  "third stage block count (d2v)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"encoder-based warm-starting of hyperparameter optimization"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "experiment config (JSON)")->expected(1);
    std::vector<PendingOverride> overrides;
    FlagSink sink(overrides);

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    sink.add_string(synth, "--out", "synth.output", "output directory");
    sink.add_size(synth, "--num-datasets", "synth.n_datasets", "number of datasets");
    sink.add_size(synth, "--rows", "synth.rows", "rows per dataset");
    sink.add_size(synth, "--features", "synth.features", "feature columns");
    sink.add_double(synth, "--separation", "synth.separation", "distance between dataset centers");
    sink.add_double(synth, "--class-gap", "synth.class_gap", "distance between class clouds");
    sink.add_double(synth, "--noise", "synth.noise", "within-class noise scale");
    sink.add_size(synth, "--seed", "seed", "random seed");

    CLI::App* prepare = app.add_subcommand("prepare", "preprocess and fragment datasets");
    sink.add_string(prepare, "--input", "data.input", "directory of CSV files (or one file)");
    sink.add_string(prepare, "--output", "data.output", "prepared output directory");
    sink.add_string(prepare, "--binarize", "prepare.binarize", "auto | always | never");
    sink.add_bool(prepare, "--fewshot,!--no-fewshot", "prepare.fewshot",
                  "fragment into 33-row tasks");
    sink.add_size(prepare, "--seed", "seed", "random seed");

    CLI::App* train = app.add_subcommand("train-encoder", "train a dataset encoder");
    sink.add_string(train, "--data", "data.output", "prepared dataset directory");
    add_encoder_flags(train, sink);
    sink.add_size(train, "--seed", "seed", "random seed");

    CLI::App* embed = app.add_subcommand("embed", "embed every task's validation rows");
    sink.add_string(embed, "--data", "data.output", "prepared dataset directory");
    sink.add_string(embed, "--tasks", "embed.tasks", "task manifest (JSONL)");
    sink.add_string(embed, "--encoder", "encoder.choice", "encoder: liltab or d2v");
    sink.add_string(embed, "--params", "encoder.params", "parameter file stem");
    sink.add_string(embed, "--out", "embed.output", "embedding CSV path");

    CLI::App* build = app.add_subcommand("build-matrix", "evaluate the config pool on every task");
    sink.add_string(build, "--data", "data.output", "prepared dataset directory");
    sink.add_string(build, "--tasks", "embed.tasks", "task manifest (JSONL)");
    sink.add_string(build, "--model", "matrix.model", "elasticnet or gbt");
    sink.add_size(build, "--pool-size", "matrix.pool_size", "configurations to sample");
    sink.add_string(build, "--pool-out", "matrix.pool_output", "pool JSON path");
    sink.add_string(build, "--out", "matrix.output", "matrix CSV path");
    sink.add_size(build, "--jobs", "jobs", "worker threads");
    sink.add_size(build, "--seed", "seed", "random seed");

    CLI::App* run = app.add_subcommand("run", "run warm-started optimization over folds");
    sink.add_string(run, "--matrix", "run.matrix", "matrix CSV path");
    sink.add_string(run, "--pool", "run.pool", "pool JSON path");
    sink.add_string(run, "--embeddings", "run.embeddings", "embedding CSV (encoder-knn)");
    sink.add_strings(run, "--strategies", "run.strategies",
                     "comma list of encoder-knn,rank,random");
    sink.add_size(run, "--folds", "run.folds", "cross-validation folds");
    sink.add_size(run, "--total-iters", "run.total_iters", "optimization iterations");
    sink.add_size(run, "--warm-iters", "run.warm_iters", "warm-start iterations");
    sink.add_size(run, "--k-nearest", "run.k_nearest", "neighbors consulted for warm-start");
    sink.add_string(run, "--out", "run.output", "trace JSONL path");
    sink.add_size(run, "--jobs", "jobs", "worker threads");
    sink.add_size(run, "--seed", "seed", "random seed");
    sink.add_double(run, "--tpe-gamma", "tpe.gamma_quantile", "good-set quantile");
    sink.add_double(run, "--tpe-bandwidth-floor", "tpe.bandwidth_floor_frac",
                    "kernel bandwidth floor, fraction of range");
    sink.add_double(run, "--tpe-laplace", "tpe.laplace", "categorical smoothing");

    CLI::App* report = app.add_subcommand("report", "summarize traces and representations");
    sink.add_string(report, "--traces", "report.traces", "trace JSONL path");
    sink.add_string(report, "--matrix", "report.matrix", "matrix CSV path");
    sink.add_string(report, "--embeddings", "report.embeddings", "embedding CSV for projections");
    sink.add_string(report, "--out", "report.output", "report output directory");
    sink.add_double(report, "--alpha", "report.alpha", "critical distance level (0.05 or 0.10)");
    sink.add_size(report, "--friedman-iteration", "report.friedman_iteration",
                  "iteration the rank test reads");
    sink.add_string(report, "--probe-encoder", "report.probe.encoder", "probe encoder choice");
    sink.add_string(report, "--probe-params", "report.probe.params", "probe parameter stem");
    sink.add_string(report, "--probe-data", "report.probe.data", "probe dataset directory");
    sink.add_size(report, "--probe-pairs", "report.probe.n_pairs", "pairs per repetition");
    sink.add_size(report, "--probe-repetitions", "report.probe.repetitions", "repetitions");
    sink.add_size(report, "--probe-views", "report.probe.views", "views per dataset (CH)");
    sink.add_size(report, "--seed", "seed", "random seed");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig()
                                                   : ExperimentConfig::from_file(config_path);
        for (const PendingOverride& o : overrides) cfg.set(o.key, o.value);

        if (synth->parsed()) metawarm::cmd_synth(cfg);
        else if (prepare->parsed()) metawarm::cmd_prepare(cfg);
        else if (train->parsed()) metawarm::cmd_train_encoder(cfg);
        else if (embed->parsed()) metawarm::cmd_embed(cfg);
        else if (build->parsed()) metawarm::cmd_build_matrix(cfg);
        else if (run->parsed()) metawarm::cmd_run(cfg);
        else if (report->parsed()) metawarm::cmd_report(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return metawarm::exit_code_for(e);
    }
    return 0;
}
