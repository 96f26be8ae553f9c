#include "metawarm/liltab.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "metawarm/errors.hpp"
#include "metawarm/serialize.hpp"

namespace metawarm {

using nlohmann::json;

TaskView view_of(const Dataset& ds) {
    TaskView v;
    v.features = ds.features;
    v.target = ds.target;
    return v;
}

TaskView view_of(const Dataset& ds, const std::vector<std::size_t>& rows,
                 const std::vector<std::size_t>& cols) {
    TaskView v;
    v.features = Tensor(rows.size(), cols.size(), 0.0);
    v.target.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c)
            v.features.at(r, c) = ds.features.at(rows[r], cols[c]);
        v.target[r] = ds.target[rows[r]];
    }
    return v;
}

namespace {

std::vector<std::size_t> mlp_sizes(std::size_t in, const LiltabArch& a, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    for (std::size_t l = 0; l < a.n_hidden_layers; ++l) sizes.push_back(a.hidden_size);
    sizes.push_back(out);
    return sizes;
}

// Attribute values laid out attribute-major: rows (i, n) for group means over n.
Tensor values_attr_major(const TaskView& task) {
    const std::size_t n = task.n_rows(), m = task.n_features();
    Tensor out(n * m, 1, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < n; ++r) out.at(i * n + r, 0) = task.features.at(r, i);
    return out;
}

Tensor targets_column(const TaskView& task) {
    Tensor out(task.n_rows(), 1, 0.0);
    for (std::size_t r = 0; r < task.n_rows(); ++r) out.at(r, 0) = task.target[r];
    return out;
}

Tensor group_mean(const Tensor& a, std::size_t group) {
    Tensor out(a.rows / group, a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) out.at(r / group, c) += a.at(r, c);
    for (double& v : out.data) v /= static_cast<double>(group);
    return out;
}

}  // namespace

LiltabParams LiltabParams::init(const LiltabArch& arch, Rng& rng) {
    const std::size_t k = arch.hidden_representation_size;
    LiltabParams p;
    p.arch = arch;
    p.f_value = MLP::make(mlp_sizes(1, arch, k), arch.dropout_rate, rng);
    p.g_value = MLP::make(mlp_sizes(k, arch, k), arch.dropout_rate, rng);
    p.f_target = MLP::make(mlp_sizes(1, arch, k), arch.dropout_rate, rng);
    p.g_target = MLP::make(mlp_sizes(k, arch, k), arch.dropout_rate, rng);
    p.f_obs = MLP::make(mlp_sizes(k + 1, arch, k), arch.dropout_rate, rng);
    p.g_obs = MLP::make(mlp_sizes(k, arch, arch.output_size), arch.dropout_rate, rng);
    return p;
}

std::vector<Tensor*> LiltabParams::parameters() {
    std::vector<Tensor*> out;
    collect_parameters(f_value, out);
    collect_parameters(g_value, out);
    collect_parameters(f_target, out);
    collect_parameters(g_target, out);
    collect_parameters(f_obs, out);
    collect_parameters(g_obs, out);
    return out;
}

MarginalEncoding encode_marginals(const TaskView& task, const LiltabParams& params) {
    if (task.n_rows() == 0) throw ConfigError("encode_marginals: empty task");
    const std::size_t n = task.n_rows();
    MarginalEncoding enc;
    enc.nu_bar = params.g_value.forward(group_mean(params.f_value.forward(values_attr_major(task)), n));
    enc.c_bar = params.g_target.forward(group_mean(params.f_target.forward(targets_column(task)), n));
    return enc;
}

namespace {

// Rows (n, i) of [nu_bar_i, x_ni], observation-major for group means over i.
Tensor obs_value_rows(const TaskView& task, const Tensor& nu_bar) {
    const std::size_t n = task.n_rows(), m = task.n_features(), k = nu_bar.cols;
    Tensor out(n * m, k + 1, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < k; ++c) out.at(r * m + i, c) = nu_bar.at(i, c);
            out.at(r * m + i, k) = task.features.at(r, i);
        }
    return out;
}

// Rows [c_bar, y_n].
Tensor obs_target_rows(const TaskView& task, const Tensor& c_bar) {
    const std::size_t n = task.n_rows(), k = c_bar.cols;
    Tensor out(n, k + 1, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < k; ++c) out.at(r, c) = c_bar.at(0, c);
        out.at(r, k) = task.target[r];
    }
    return out;
}

}  // namespace

Tensor encode_observations(const TaskView& task, const MarginalEncoding& marginals,
                           const LiltabParams& params) {
    if (marginals.nu_bar.rows != task.n_features())
        throw ConfigError("encode_observations: marginals do not match the task's attributes");
    const std::size_t m = task.n_features();
    Tensor value_part =
        group_mean(params.f_obs.forward(obs_value_rows(task, marginals.nu_bar)), m);
    Tensor target_part = params.f_obs.forward(obs_target_rows(task, marginals.c_bar));
    for (std::size_t i = 0; i < value_part.size(); ++i)
        value_part.data[i] += target_part.data[i];
    return params.g_obs.forward(value_part);
}

std::vector<double> embed_dataset(const TaskView& task, const LiltabParams& params) {
    const Tensor u = encode_observations(task, encode_marginals(task, params), params);
    std::vector<double> out(u.cols, 0.0);
    for (std::size_t r = 0; r < u.rows; ++r)
        for (std::size_t c = 0; c < u.cols; ++c) out[c] += u.at(r, c);
    for (double& v : out) v /= static_cast<double>(u.rows);
    return out;
}

double contrastive_loss(const Tensor& embeddings, const PairSet& pairs) {
    if (pairs.same.empty() && pairs.diff.empty())
        throw ConfigError("contrastive_loss: no pairs");
    auto dist = [&](const IndexPair& p) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < embeddings.cols; ++c) {
            const double d = embeddings.at(p.first, c) - embeddings.at(p.second, c);
            d2 += d * d;
        }
        return std::sqrt(d2);
    };
    double s = 0.0;
    for (const IndexPair& p : pairs.same) s += dist(p);
    for (const IndexPair& p : pairs.diff) s -= dist(p);
    return s / static_cast<double>(pairs.same.size() + pairs.diff.size());
}

ContrastiveBatch build_contrastive_batch(const std::vector<Dataset>& datasets,
                                         std::size_t n_datasets, std::size_t rows_per_dataset,
                                         Rng& rng) {
    if (datasets.size() < 2 || n_datasets < 2)
        throw ConfigError("build_contrastive_batch: need at least 2 datasets");
    if (n_datasets > datasets.size())
        throw ConfigError("build_contrastive_batch: more datasets requested than provided");
    if (rows_per_dataset == 0) throw ConfigError("build_contrastive_batch: zero rows per dataset");

    std::vector<std::size_t> chosen = rng.sample_indices(datasets.size(), n_datasets);

    ContrastiveBatch batch;
    batch.rows_per_group = rows_per_dataset;
    std::vector<std::size_t> all_cols;
    for (std::size_t d : chosen) {
        const Dataset& ds = datasets[d];
        if (ds.n_rows() < rows_per_dataset)
            throw ConfigError("build_contrastive_batch: dataset " + ds.id + " has only " +
                              std::to_string(ds.n_rows()) + " rows, need " +
                              std::to_string(rows_per_dataset));
        std::vector<std::size_t> rows = rng.sample_indices(ds.n_rows(), rows_per_dataset);
        all_cols.resize(ds.n_features());
        for (std::size_t c = 0; c < ds.n_features(); ++c) all_cols[c] = c;
        batch.groups.push_back(view_of(ds, rows, all_cols));
        batch.group_ids.push_back(ds.id);
    }

    const std::size_t total = n_datasets * rows_per_dataset;
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = i + 1; j < total; ++j) {
            if (i / rows_per_dataset == j / rows_per_dataset)
                batch.pairs.same.emplace_back(i, j);
            else
                batch.pairs.diff.emplace_back(i, j);
        }
    return batch;
}

BoundLiltab bind_liltab(Tape& tape, const LiltabParams& params) {
    BoundLiltab b;
    b.f_value = params.f_value.bind(tape);
    b.g_value = params.g_value.bind(tape);
    b.f_target = params.f_target.bind(tape);
    b.g_target = params.g_target.bind(tape);
    b.f_obs = params.f_obs.bind(tape);
    b.g_obs = params.g_obs.bind(tape);
    return b;
}

namespace {

std::vector<Var> bound_vars(const BoundLiltab& b) {
    std::vector<Var> vs;
    for (const MLP::Bound* net : {&b.f_value, &b.g_value, &b.f_target, &b.g_target, &b.f_obs,
                                  &b.g_obs})
        for (std::size_t l = 0; l < net->weights.size(); ++l) {
            vs.push_back(net->weights[l]);
            vs.push_back(net->biases[l]);
        }
    return vs;
}

}  // namespace

Var liltab_observations(Tape& tape, const BoundLiltab& bound, const LiltabParams& params,
                        const TaskView& task, bool training, Rng* rng) {
    if (task.n_rows() == 0) throw ConfigError("liltab_observations: empty task");
    const std::size_t n = task.n_rows(), m = task.n_features();

    // Step 1: marginal summaries.
    Var values = tape.constant(values_attr_major(task));
    Var fv = params.f_value.forward(tape, bound.f_value, values, training, rng);
    Var nu_bar = params.g_value.forward(tape, bound.g_value, tape.group_mean_rows(fv, n),
                                        training, rng);  // I x K
    Var targets = tape.constant(targets_column(task));
    Var ft = params.f_target.forward(tape, bound.f_target, targets, training, rng);
    Var c_bar = params.g_target.forward(tape, bound.g_target, tape.mean_over_rows(ft),
                                        training, rng);  // 1 x K

    // Step 2: per-observation encodings. Value rows are observation-major so
    // the group mean runs over attributes.
    Tensor x_col(n * m, 1, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < m; ++i) x_col.at(r * m + i, 0) = task.features.at(r, i);
    Var value_in = tape.concat_cols(tape.tile_rows(nu_bar, n), tape.constant(std::move(x_col)));
    Var value_enc = params.f_obs.forward(tape, bound.f_obs, value_in, training, rng);
    Var value_mean = tape.group_mean_rows(value_enc, m);  // N x K

    Tensor y_col(n, 1, 0.0);
    for (std::size_t r = 0; r < n; ++r) y_col.at(r, 0) = task.target[r];
    Var target_in = tape.concat_cols(tape.tile_rows(c_bar, n), tape.constant(std::move(y_col)));
    Var target_enc = params.f_obs.forward(tape, bound.f_obs, target_in, training, rng);

    return params.g_obs.forward(tape, bound.g_obs, tape.add(value_mean, target_enc), training,
                                rng);  // N x p
}

TrainedLiltab train_liltab(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                           const LiltabArch& arch, const LiltabTrainOptions& opts) {
    if (datasets.size() < 2) throw ConfigError("train_liltab: need at least 2 datasets");
    if (opts.n_datasets_per_batch < 2)
        throw ConfigError("train_liltab: need at least 2 datasets per batch");

    Rng master(cfg.seed);
    TrainedLiltab out;
    out.params = LiltabParams::init(arch, master);

    const std::size_t rows_per_dataset =
        std::max<std::size_t>(1, cfg.batch_size / opts.n_datasets_per_batch);
    std::size_t min_rows = datasets.front().n_rows();
    for (const Dataset& ds : datasets) min_rows = std::min(min_rows, ds.n_rows());
    const std::size_t rows = std::min(rows_per_dataset, min_rows);

    std::vector<Tensor*> params = out.params.parameters();
    Adam adam(params, cfg.learning_rate, cfg.weight_decay);

    auto run_epoch = [&](std::size_t, Rng& rng) {
        std::vector<std::size_t> order(datasets.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        // Group into batches of n_datasets_per_batch; a trailing group of one
        // dataset is folded into the previous batch.
        std::vector<std::vector<std::size_t>> chunks;
        for (std::size_t i = 0; i < order.size(); i += opts.n_datasets_per_batch) {
            const std::size_t end = std::min(order.size(), i + opts.n_datasets_per_batch);
            chunks.emplace_back(order.begin() + i, order.begin() + end);
        }
        if (chunks.size() > 1 && chunks.back().size() < 2) {
            chunks[chunks.size() - 2].push_back(chunks.back()[0]);
            chunks.pop_back();
        }

        double epoch_loss = 0.0;
        for (const std::vector<std::size_t>& chunk : chunks) {
            std::vector<Dataset> group;
            for (std::size_t d : chunk) group.push_back(datasets[d]);
            ContrastiveBatch batch = build_contrastive_batch(group, group.size(), rows, rng);

            Tape tape;
            BoundLiltab bound = bind_liltab(tape, out.params);
            std::vector<Var> embeddings;
            for (const TaskView& task : batch.groups)
                embeddings.push_back(
                    liltab_observations(tape, bound, out.params, task, true, &rng));
            Var pooled = tape.concat_rows(embeddings);
            Var same_sum = tape.pair_distance_sum(pooled, batch.pairs.same);
            Var diff_sum = tape.pair_distance_sum(pooled, batch.pairs.diff);
            const double norm =
                1.0 / static_cast<double>(batch.pairs.same.size() + batch.pairs.diff.size());
            Var loss = tape.scale(tape.sub(same_sum, diff_sum), norm);

            adam.step(gradients(tape, loss, bound_vars(bound)));
            epoch_loss += tape.value(loss).item();
        }
        return epoch_loss / static_cast<double>(chunks.size());
    };

    TrainConfig loop_cfg = cfg;
    loop_cfg.seed = master.next_u64();
    out.result = train_loop(params, loop_cfg, run_epoch);
    return out;
}

void LiltabParams::save(const std::string& stem) const {
    ParamWriter w;
    w.add_mlp("f_value", f_value);
    w.add_mlp("g_value", g_value);
    w.add_mlp("f_target", f_target);
    w.add_mlp("g_target", g_target);
    w.add_mlp("f_obs", f_obs);
    w.add_mlp("g_obs", g_obs);
    json hyper;
    hyper["arch"] = {{"hidden_representation_size", arch.hidden_representation_size},
                     {"n_hidden_layers", arch.n_hidden_layers},
                     {"hidden_size", arch.hidden_size},
                     {"dropout_rate", arch.dropout_rate},
                     {"output_size", arch.output_size}};
    hyper["nets"] = {{"f_value", mlp_meta(f_value)},   {"g_value", mlp_meta(g_value)},
                     {"f_target", mlp_meta(f_target)}, {"g_target", mlp_meta(g_target)},
                     {"f_obs", mlp_meta(f_obs)},       {"g_obs", mlp_meta(g_obs)}};
    w.write(stem, "liltab", hyper);
}

LiltabParams LiltabParams::load(const std::string& stem) {
    ParamReader r(stem);
    if (r.kind() != "liltab") throw ConfigError(stem + ": not a liltab parameter file");
    const json& a = r.hyperparameters().at("arch");
    LiltabParams p;
    p.arch.hidden_representation_size = a.at("hidden_representation_size").get<std::size_t>();
    p.arch.n_hidden_layers = a.at("n_hidden_layers").get<std::size_t>();
    p.arch.hidden_size = a.at("hidden_size").get<std::size_t>();
    p.arch.dropout_rate = a.at("dropout_rate").get<double>();
    p.arch.output_size = a.at("output_size").get<std::size_t>();
    p.f_value = r.mlp("f_value");
    p.g_value = r.mlp("g_value");
    p.f_target = r.mlp("f_target");
    p.g_target = r.mlp("g_target");
    p.f_obs = r.mlp("f_obs");
    p.g_obs = r.mlp("g_obs");
    return p;
}

}  // namespace metawarm
