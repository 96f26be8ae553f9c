#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "metawarm/d2v.hpp"
#include "metawarm/errors.hpp"
#include "metawarm/rng.hpp"
#include "metawarm/synthetic.hpp"

using namespace metawarm;

namespace {

D2VArch tiny_arch() {
    D2VArch a;
    a.f_dense_hidden_size = 6;
    a.f_res_hidden_size = 6;
    a.f_res_n_hidden = 1;
    a.f_dense_out_hidden_size = 6;
    a.f_block_repetitions = 1;
    a.g_layers_sizes = {8, 4};
    a.h_dense_hidden_size = 6;
    a.h_res_hidden_size = 6;
    a.h_res_n_hidden = 1;
    a.h_dense_out_hidden_size = 4;
    a.h_block_repetitions = 1;
    a.train_n_batches = 10;
    return a;
}

TaskView random_task(std::size_t n, std::size_t m, std::uint64_t seed) {
    Rng rng(seed);
    TaskView v;
    v.features = Tensor(n, m, 0.0);
    for (double& x : v.features.data) x = rng.uniform(-2, 2);
    v.target.resize(n);
    for (std::size_t r = 0; r < n; ++r) v.target[r] = static_cast<int>(rng.index(2));
    return v;
}

MLP fixed_affine(std::size_t in, std::size_t out, const std::vector<std::vector<double>>& w) {
    MLP net;
    net.layer_sizes = {in, out};
    net.weights.push_back(Tensor::from_rows(w));
    net.biases.emplace_back(1, out, 0.0);
    return net;
}

// Stages reduced to plain affine maps: f sums (value, target), g and h pass
// through. The embedding of a 1x1 task is x + y.
D2VParams identity_params() {
    D2VParams p;
    p.arch = tiny_arch();
    p.arch.gamma = 1.0;
    p.arch.h_dense_out_hidden_size = 1;
    p.stage_f.entry = fixed_affine(2, 1, {{1.0}, {1.0}});
    p.stage_f.exit = fixed_affine(1, 1, {{1.0}});
    p.stage_g = fixed_affine(1, 1, {{1.0}});
    p.stage_h.entry = fixed_affine(1, 1, {{1.0}});
    p.stage_h.exit = fixed_affine(1, 1, {{1.0}});
    return p;
}

std::vector<BatchPair> fixed_pairs(const D2VParams& p, double distance, bool same) {
    // With identity stages, a 1x1 task embeds to x + y.
    BatchPair pair;
    pair.same_origin = same;
    pair.a = random_task(1, 1, 0);
    pair.a.features.at(0, 0) = 0.0;
    pair.a.target[0] = 0;
    pair.b = pair.a;
    pair.b.features.at(0, 0) = distance;
    (void)p;
    return {pair};
}

}  // namespace

TEST_CASE("embedding is invariant to row permutations") {
    Rng rng(1);
    const D2VParams p = D2VParams::init(tiny_arch(), rng);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TaskView task = random_task(9, 4, seed);
        TaskView reversed = task;
        for (std::size_t r = 0; r < task.n_rows(); ++r) {
            for (std::size_t c = 0; c < task.n_features(); ++c)
                reversed.features.at(r, c) =
                    task.features.at(task.n_rows() - 1 - r, c);
            reversed.target[r] = task.target[task.n_rows() - 1 - r];
        }
        const std::vector<double> a = d2v_embed(task, p);
        const std::vector<double> b = d2v_embed(reversed, p);
        for (std::size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-10);
    }
}

TEST_CASE("embedding is invariant to column permutations") {
    Rng rng(2);
    const D2VParams p = D2VParams::init(tiny_arch(), rng);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TaskView task = random_task(7, 5, seed + 100);
        TaskView reversed = task;
        for (std::size_t r = 0; r < task.n_rows(); ++r)
            for (std::size_t c = 0; c < task.n_features(); ++c)
                reversed.features.at(r, c) =
                    task.features.at(r, task.n_features() - 1 - c);
        const std::vector<double> a = d2v_embed(task, p);
        const std::vector<double> b = d2v_embed(reversed, p);
        for (std::size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-10);
    }
}

TEST_CASE("identity stages embed a 1x1 task to x + y") {
    const D2VParams p = identity_params();
    TaskView task;
    task.features = Tensor::from_rows({{2.5}});
    task.target = {1};
    const std::vector<double> e = d2v_embed(task, p);
    REQUIRE(e.size() == 1);
    CHECK(e[0] == doctest::Approx(3.5).epsilon(1e-14));
}

TEST_CASE("identical embeddings give probability one") {
    const std::vector<double> e{0.3, -0.7, 2.0};
    CHECK(same_dataset_probability(e, e, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("distance ln 2 at gamma 1 gives one half") {
    const std::vector<double> a{0.0}, b{std::log(2.0)};
    CHECK(same_dataset_probability(a, b, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gamma scales the log probability linearly") {
    const std::vector<double> a{0.0, 0.0}, b{0.6, 0.8};
    const double p1 = same_dataset_probability(a, b, 1.0);
    const double p2 = same_dataset_probability(a, b, 2.0);
    CHECK(std::log(p2) == doctest::Approx(2.0 * std::log(p1)).epsilon(1e-12));
}

TEST_CASE("probability is symmetric and strictly decreasing in distance") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> a(4), b(4);
        for (double& v : a) v = rng.uniform(-2, 2);
        for (double& v : b) v = rng.uniform(-2, 2);
        CHECK(same_dataset_probability(a, b, 1.3) ==
              doctest::Approx(same_dataset_probability(b, a, 1.3)).epsilon(1e-15));
    }
    const std::vector<double> o{0.0};
    double last = 1.1;
    for (double d = 0.0; d < 3.0; d += 0.3) {
        const double p = same_dataset_probability(o, {d}, 1.0);
        CHECK(p < last);
        last = p;
    }
}

TEST_CASE("probability rejects mismatched dimensions") {
    CHECK_THROWS_AS(same_dataset_probability({1.0}, {1.0, 2.0}, 1.0), ConfigError);
}

TEST_CASE("same-origin pair with identical views has near-zero loss") {
    const D2VParams p = identity_params();
    const std::vector<BatchPair> pairs = fixed_pairs(p, 0.0, true);
    CHECK(d2v_loss(pairs, p) < 1e-10);
}

TEST_CASE("different-origin pair at probability one half costs ln 2") {
    const D2VParams p = identity_params();
    const std::vector<BatchPair> pairs = fixed_pairs(p, std::log(2.0), false);
    CHECK(d2v_loss(pairs, p) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("duplicating the pair list leaves the mean loss unchanged") {
    Rng rng(9);
    const D2VParams p = D2VParams::init(tiny_arch(), rng);
    SyntheticSpec spec;
    spec.n_datasets = 3;
    spec.rows = 20;
    spec.features = 4;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    Rng prng(3);
    std::vector<BatchPair> pairs;
    for (int i = 0; i < 4; ++i) pairs.push_back(sample_batch_pair(datasets, i % 2 == 0, prng));
    const double once = d2v_loss(pairs, p);
    std::vector<BatchPair> doubled = pairs;
    doubled.insert(doubled.end(), pairs.begin(), pairs.end());
    CHECK(d2v_loss(doubled, p) == doctest::Approx(once).epsilon(1e-12));
}

TEST_CASE("empty pair list is rejected") {
    Rng rng(1);
    const D2VParams p = D2VParams::init(tiny_arch(), rng);
    CHECK_THROWS_AS(d2v_loss({}, p), ConfigError);
}

TEST_CASE("tape loss equals the plain loss and its gradient matches FD") {
    SyntheticSpec spec;
    spec.n_datasets = 3;
    spec.rows = 18;
    spec.features = 3;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);

    double max_rel = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 50);
        D2VParams params = D2VParams::init(tiny_arch(), rng);
        Rng prng(seed);
        std::vector<BatchPair> pairs;
        for (int i = 0; i < 3; ++i)
            pairs.push_back(sample_batch_pair(datasets, i % 2 == 0, prng));

        Tape tape;
        BoundD2V bound = bind_d2v(tape, params);
        Var loss = d2v_loss_var(tape, bound, params, pairs);
        CHECK(std::abs(tape.value(loss).item() - d2v_loss(pairs, params)) < 1e-12);
        tape.backward(loss);

        std::vector<Tensor*> flat = params.parameters();
        std::vector<Var> leaves;
        auto add_net = [&leaves](const MLP::Bound& net) {
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                leaves.push_back(net.weights[l]);
                leaves.push_back(net.biases[l]);
            }
        };
        add_net(bound.f.entry);
        for (const MLP::Bound& blk : bound.f.blocks) add_net(blk);
        add_net(bound.f.exit);
        add_net(bound.g);
        add_net(bound.h.entry);
        for (const MLP::Bound& blk : bound.h.blocks) add_net(blk);
        add_net(bound.h.exit);
        REQUIRE(leaves.size() == flat.size());

        Rng pick(seed + 7);
        for (int probe = 0; probe < 5; ++probe) {
            const std::size_t pi = pick.index(flat.size());
            const std::size_t elem = pick.index(flat[pi]->size());
            const double keep = flat[pi]->data[elem];
            flat[pi]->data[elem] = keep + 1e-5;
            const double hi = d2v_loss(pairs, params);
            flat[pi]->data[elem] = keep - 1e-5;
            const double lo = d2v_loss(pairs, params);
            flat[pi]->data[elem] = keep;
            const double fd = (hi - lo) / 2e-5;
            const double ad = tape.grad(leaves[pi]).data[elem];
            if (std::abs(fd) < 1e-8 && std::abs(ad) < 1e-8) continue;
            max_rel = std::max(max_rel, std::abs(ad - fd) /
                                            std::max({std::abs(fd), std::abs(ad), 1e-6}));
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("training beats chance on strongly distinct datasets") {
    SyntheticSpec spec;
    spec.n_datasets = 2;
    spec.rows = 60;
    spec.features = 4;
    spec.separation = 8.0;
    spec.seed = 7;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);

    TrainConfig cfg;
    cfg.num_epochs = 15;
    cfg.early_stopping_epochs = 15;
    cfg.learning_rate = 3e-3;
    cfg.weight_decay = 1e-4;
    cfg.batch_size = 8;
    cfg.seed = 11;
    const TrainedD2V trained = train_d2v(datasets, cfg, tiny_arch());

    Rng prng(123);
    std::size_t correct = 0;
    const std::size_t n_pairs = 60;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const BatchPair pair = sample_batch_pair(datasets, i % 2 == 0, prng);
        const double p = same_dataset_probability(d2v_embed(pair.a, trained.params),
                                                  d2v_embed(pair.b, trained.params),
                                                  trained.params.arch.gamma);
        if ((p > 0.5) == pair.same_origin) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(n_pairs) > 0.5);
}

TEST_CASE("seed-fixed training repeats the loss history") {
    SyntheticSpec spec;
    spec.n_datasets = 2;
    spec.rows = 24;
    spec.features = 3;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    TrainConfig cfg;
    cfg.num_epochs = 4;
    cfg.early_stopping_epochs = 4;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 4;
    cfg.seed = 5;
    D2VArch arch = tiny_arch();
    arch.train_n_batches = 5;
    const TrainedD2V a = train_d2v(datasets, cfg, arch);
    const TrainedD2V b = train_d2v(datasets, cfg, arch);
    CHECK(a.result.loss_history == b.result.loss_history);
}

TEST_CASE("training rejects a single dataset") {
    SyntheticSpec spec;
    spec.n_datasets = 1;
    spec.rows = 20;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    TrainConfig cfg;
    CHECK_THROWS_AS(train_d2v(datasets, cfg, tiny_arch()), ConfigError);
}

TEST_CASE("d2v parameters round-trip through files") {
    Rng rng(31);
    const D2VParams p = D2VParams::init(tiny_arch(), rng);
    p.save("d2v_roundtrip");
    D2VParams q = D2VParams::load("d2v_roundtrip");
    D2VParams p_copy = p;
    const std::vector<Tensor*> a = p_copy.parameters();
    const std::vector<Tensor*> b = q.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i]->size(); ++j)
            CHECK(a[i]->data[j] == b[i]->data[j]);
    CHECK(q.arch.gamma == p.arch.gamma);
    CHECK(q.embedding_size() == p.embedding_size());
}

TEST_CASE("sampled views respect the row and column ranges") {
    SyntheticSpec spec;
    spec.n_datasets = 1;
    spec.rows = 50;
    spec.features = 6;
    const Dataset ds = make_synthetic_corpus(spec)[0];
    Rng rng(9);
    for (int rep = 0; rep < 50; ++rep) {
        const TaskView v = sample_view(ds, rng);
        CHECK(v.n_rows() >= 8);
        CHECK(v.n_rows() <= 32);
        CHECK(v.n_features() >= 1);
        CHECK(v.n_features() <= 6);
    }
}
