#include "metawarm/d2v.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "metawarm/errors.hpp"
#include "metawarm/serialize.hpp"

namespace metawarm {

using nlohmann::json;

ResidualStage ResidualStage::make(std::size_t in, std::size_t width, std::size_t block_hidden,
                                  std::size_t block_layers, std::size_t repetitions,
                                  std::size_t out, Rng& rng) {
    if (block_hidden != width)
        throw ConfigError("ResidualStage: block hidden width must match stage width for skips");
    ResidualStage s;
    s.entry = MLP::make({in, width}, 0.0, rng);
    for (std::size_t r = 0; r < repetitions; ++r) {
        std::vector<std::size_t> sizes{width};
        for (std::size_t l = 0; l < block_layers; ++l) sizes.push_back(block_hidden);
        s.blocks.push_back(MLP::make(sizes, 0.0, rng, /*relu_on_output=*/true));
    }
    s.exit = MLP::make({width, out}, 0.0, rng);
    return s;
}

Tensor ResidualStage::forward(const Tensor& x) const {
    Tensor h = entry.forward(x);
    for (const MLP& block : blocks) {
        Tensor b = block.forward(h);
        for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += b.data[i];
    }
    return exit.forward(h);
}

ResidualStage::Bound ResidualStage::bind(Tape& tape) const {
    Bound b;
    b.entry = entry.bind(tape);
    for (const MLP& block : blocks) b.blocks.push_back(block.bind(tape));
    b.exit = exit.bind(tape);
    return b;
}

Var ResidualStage::forward(Tape& tape, const Bound& bound, Var x) const {
    Var h = entry.forward(tape, bound.entry, x, false, nullptr);
    for (std::size_t i = 0; i < blocks.size(); ++i)
        h = tape.add(h, blocks[i].forward(tape, bound.blocks[i], h, false, nullptr));
    return exit.forward(tape, bound.exit, h, false, nullptr);
}

void ResidualStage::collect(std::vector<Tensor*>& out) {
    collect_parameters(entry, out);
    for (MLP& block : blocks) collect_parameters(block, out);
    collect_parameters(exit, out);
}

D2VParams D2VParams::init(const D2VArch& arch, Rng& rng) {
    D2VParams p;
    p.arch = arch;
    p.stage_f = ResidualStage::make(2, arch.f_dense_hidden_size, arch.f_res_hidden_size,
                                    arch.f_res_n_hidden, arch.f_block_repetitions,
                                    arch.f_dense_out_hidden_size, rng);
    std::vector<std::size_t> g_sizes{arch.f_dense_out_hidden_size};
    for (std::size_t s : arch.g_layers_sizes) g_sizes.push_back(s);
    p.stage_g = MLP::make(g_sizes, 0.0, rng);
    p.stage_h = ResidualStage::make(arch.g_layers_sizes.back(), arch.h_dense_hidden_size,
                                    arch.h_res_hidden_size, arch.h_res_n_hidden,
                                    arch.h_block_repetitions, arch.h_dense_out_hidden_size, rng);
    return p;
}

std::vector<Tensor*> D2VParams::parameters() {
    std::vector<Tensor*> out;
    stage_f.collect(out);
    collect_parameters(stage_g, out);
    stage_h.collect(out);
    return out;
}

namespace {

// (value, target) pairs laid out attribute-major: rows (i, n).
Tensor pair_rows(const TaskView& task) {
    const std::size_t n = task.n_rows(), m = task.n_features();
    Tensor out(n * m, 2, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < n; ++r) {
            out.at(i * n + r, 0) = task.features.at(r, i);
            out.at(i * n + r, 1) = task.target[r];
        }
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

std::vector<double> d2v_embed(const TaskView& task, const D2VParams& params) {
    if (task.n_rows() == 0 || task.n_features() == 0)
        throw ConfigError("d2v_embed: empty task");
    const Tensor per_value = params.stage_f.forward(pair_rows(task));
    const Tensor per_attr = params.stage_g.forward(group_mean(per_value, task.n_rows()));
    const Tensor pooled = group_mean(per_attr, per_attr.rows);
    const Tensor e = params.stage_h.forward(pooled);
    return e.data;
}

double same_dataset_probability(const std::vector<double>& e1, const std::vector<double>& e2,
                                double gamma) {
    if (e1.size() != e2.size())
        throw ConfigError("same_dataset_probability: dimension mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < e1.size(); ++i) {
        const double d = e1[i] - e2[i];
        d2 += d * d;
    }
    return std::exp(-gamma * std::sqrt(d2));
}

TaskView sample_view(const Dataset& ds, Rng& rng) {
    const std::size_t max_rows = std::min<std::size_t>(32, ds.n_rows());
    const std::size_t min_rows = std::min<std::size_t>(8, max_rows);
    const std::size_t n = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(min_rows), static_cast<std::int64_t>(max_rows)));
    const std::size_t c = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(ds.n_features())));
    std::vector<std::size_t> rows = rng.sample_indices(ds.n_rows(), n);
    std::vector<std::size_t> cols = rng.sample_indices(ds.n_features(), c);
    return view_of(ds, rows, cols);
}

BatchPair sample_batch_pair(const std::vector<Dataset>& datasets, bool same_origin, Rng& rng) {
    if (datasets.size() < 2)
        throw ConfigError("sample_batch_pair: need at least 2 datasets");
    BatchPair pair;
    pair.same_origin = same_origin;
    if (same_origin) {
        const std::size_t d = rng.index(datasets.size());
        pair.a = sample_view(datasets[d], rng);
        pair.b = sample_view(datasets[d], rng);
    } else {
        const std::size_t d1 = rng.index(datasets.size());
        std::size_t d2 = rng.index(datasets.size() - 1);
        if (d2 >= d1) ++d2;
        pair.a = sample_view(datasets[d1], rng);
        pair.b = sample_view(datasets[d2], rng);
    }
    return pair;
}

namespace {
constexpr double kProbClamp = 1e-12;
}

double d2v_loss(const std::vector<BatchPair>& pairs, const D2VParams& params) {
    if (pairs.empty()) throw ConfigError("d2v_loss: empty pair list");
    double total = 0.0;
    for (const BatchPair& pair : pairs) {
        const double p = std::clamp(same_dataset_probability(d2v_embed(pair.a, params),
                                                             d2v_embed(pair.b, params),
                                                             params.arch.gamma),
                                    kProbClamp, 1.0 - kProbClamp);
        total += pair.same_origin ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(pairs.size());
}

BoundD2V bind_d2v(Tape& tape, const D2VParams& params) {
    BoundD2V b;
    b.f = params.stage_f.bind(tape);
    b.g = params.stage_g.bind(tape);
    b.h = params.stage_h.bind(tape);
    return b;
}

Var d2v_embedding_var(Tape& tape, const BoundD2V& bound, const D2VParams& params,
                      const TaskView& task) {
    if (task.n_rows() == 0 || task.n_features() == 0)
        throw ConfigError("d2v_embedding_var: empty task");
    Var in = tape.constant(pair_rows(task));
    Var per_value = params.stage_f.forward(tape, bound.f, in);
    Var per_attr = params.stage_g.forward(tape, bound.g, tape.group_mean_rows(per_value,
                                                                              task.n_rows()),
                                          false, nullptr);
    Var pooled = tape.mean_over_rows(per_attr);
    return params.stage_h.forward(tape, bound.h, pooled);
}

Var d2v_loss_var(Tape& tape, const BoundD2V& bound, const D2VParams& params,
                 const std::vector<BatchPair>& pairs) {
    if (pairs.empty()) throw ConfigError("d2v_loss_var: empty pair list");
    std::vector<Var> terms;
    for (const BatchPair& pair : pairs) {
        Var ea = d2v_embedding_var(tape, bound, params, pair.a);
        Var eb = d2v_embedding_var(tape, bound, params, pair.b);
        Var dist = tape.l2_norm(tape.sub(ea, eb));
        Var p = tape.clamp(tape.exp(tape.scale(dist, -params.arch.gamma)), kProbClamp,
                           1.0 - kProbClamp);
        if (pair.same_origin) {
            terms.push_back(tape.scale(tape.log(p), -1.0));
        } else {
            Var one_minus = tape.sub(tape.constant(Tensor::scalar(1.0)), p);
            terms.push_back(tape.scale(tape.log(one_minus), -1.0));
        }
    }
    return tape.scale(tape.sum_list(terms), 1.0 / static_cast<double>(terms.size()));
}

namespace {

std::vector<Var> bound_vars(const BoundD2V& b) {
    std::vector<Var> vs;
    auto add_net = [&vs](const MLP::Bound& net) {
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            vs.push_back(net.weights[l]);
            vs.push_back(net.biases[l]);
        }
    };
    add_net(b.f.entry);
    for (const MLP::Bound& blk : b.f.blocks) add_net(blk);
    add_net(b.f.exit);
    add_net(b.g);
    add_net(b.h.entry);
    for (const MLP::Bound& blk : b.h.blocks) add_net(blk);
    add_net(b.h.exit);
    return vs;
}

}  // namespace

TrainedD2V train_d2v(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                     const D2VArch& arch) {
    if (datasets.size() < 2) throw ConfigError("train_d2v: need at least 2 datasets");

    Rng master(cfg.seed);
    TrainedD2V out;
    out.params = D2VParams::init(arch, master);

    std::vector<Tensor*> params = out.params.parameters();
    Adam adam(params, cfg.learning_rate, cfg.weight_decay);

    auto run_epoch = [&](std::size_t, Rng& rng) {
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < arch.train_n_batches; ++b) {
            std::vector<BatchPair> pairs;
            pairs.reserve(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i)
                pairs.push_back(sample_batch_pair(datasets, i % 2 == 0, rng));

            Tape tape;
            BoundD2V bound = bind_d2v(tape, out.params);
            Var loss = d2v_loss_var(tape, bound, out.params, pairs);
            adam.step(gradients(tape, loss, bound_vars(bound)));
            epoch_loss += tape.value(loss).item();
        }
        return epoch_loss / static_cast<double>(arch.train_n_batches);
    };

    TrainConfig loop_cfg = cfg;
    loop_cfg.seed = master.next_u64();
    out.result = train_loop(params, loop_cfg, run_epoch);
    return out;
}

namespace {

void add_stage(ParamWriter& w, json& nets, const std::string& prefix, const ResidualStage& s) {
    w.add_mlp(prefix + ".entry", s.entry);
    nets[prefix + ".entry"] = mlp_meta(s.entry);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
        const std::string name = prefix + ".block" + std::to_string(i);
        w.add_mlp(name, s.blocks[i]);
        nets[name] = mlp_meta(s.blocks[i]);
    }
    w.add_mlp(prefix + ".exit", s.exit);
    nets[prefix + ".exit"] = mlp_meta(s.exit);
}

ResidualStage read_stage(const ParamReader& r, const std::string& prefix,
                         std::size_t repetitions) {
    ResidualStage s;
    s.entry = r.mlp(prefix + ".entry");
    for (std::size_t i = 0; i < repetitions; ++i)
        s.blocks.push_back(r.mlp(prefix + ".block" + std::to_string(i)));
    s.exit = r.mlp(prefix + ".exit");
    return s;
}

}  // namespace

void D2VParams::save(const std::string& stem) const {
    ParamWriter w;
    json nets = json::object();
    add_stage(w, nets, "f", stage_f);
    w.add_mlp("g", stage_g);
    nets["g"] = mlp_meta(stage_g);
    add_stage(w, nets, "h", stage_h);

    json hyper;
    hyper["arch"] = {{"gamma", arch.gamma},
                     {"f_dense_hidden_size", arch.f_dense_hidden_size},
                     {"f_res_hidden_size", arch.f_res_hidden_size},
                     {"f_res_n_hidden", arch.f_res_n_hidden},
                     {"f_dense_out_hidden_size", arch.f_dense_out_hidden_size},
                     {"f_block_repetitions", arch.f_block_repetitions},
                     {"g_layers_sizes", arch.g_layers_sizes},
                     {"h_dense_hidden_size", arch.h_dense_hidden_size},
                     {"h_res_hidden_size", arch.h_res_hidden_size},
                     {"h_res_n_hidden", arch.h_res_n_hidden},
                     {"h_dense_out_hidden_size", arch.h_dense_out_hidden_size},
                     {"h_block_repetitions", arch.h_block_repetitions},
                     {"train_n_batches", arch.train_n_batches}};
    hyper["nets"] = nets;
    w.write(stem, "d2v", hyper);
}

D2VParams D2VParams::load(const std::string& stem) {
    ParamReader r(stem);
    if (r.kind() != "d2v") throw ConfigError(stem + ": not a d2v parameter file");
    const json& a = r.hyperparameters().at("arch");
    D2VParams p;
    p.arch.gamma = a.at("gamma").get<double>();
    p.arch.f_dense_hidden_size = a.at("f_dense_hidden_size").get<std::size_t>();
    p.arch.f_res_hidden_size = a.at("f_res_hidden_size").get<std::size_t>();
    p.arch.f_res_n_hidden = a.at("f_res_n_hidden").get<std::size_t>();
    p.arch.f_dense_out_hidden_size = a.at("f_dense_out_hidden_size").get<std::size_t>();
    p.arch.f_block_repetitions = a.at("f_block_repetitions").get<std::size_t>();
    p.arch.g_layers_sizes = a.at("g_layers_sizes").get<std::vector<std::size_t>>();
    p.arch.h_dense_hidden_size = a.at("h_dense_hidden_size").get<std::size_t>();
    p.arch.h_res_hidden_size = a.at("h_res_hidden_size").get<std::size_t>();
    p.arch.h_res_n_hidden = a.at("h_res_n_hidden").get<std::size_t>();
    p.arch.h_dense_out_hidden_size = a.at("h_dense_out_hidden_size").get<std::size_t>();
    p.arch.h_block_repetitions = a.at("h_block_repetitions").get<std::size_t>();
    p.arch.train_n_batches = a.at("train_n_batches").get<std::size_t>();
    p.stage_f = read_stage(r, "f", p.arch.f_block_repetitions);
    p.stage_g = r.mlp("g");
    p.stage_h = read_stage(r, "h", p.arch.h_block_repetitions);
    return p;
}

}  // namespace metawarm
