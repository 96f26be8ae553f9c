#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "metawarm/errors.hpp"
#include "metawarm/liltab.hpp"
#include "metawarm/rng.hpp"
#include "metawarm/synthetic.hpp"

using namespace metawarm;

namespace {

MLP fixed_mlp(std::vector<std::size_t> sizes, std::vector<Tensor> weights,
              std::vector<Tensor> biases) {
    MLP net;
    net.layer_sizes = std::move(sizes);
    net.weights = std::move(weights);
    net.biases = std::move(biases);
    return net;
}

// K = 1 encoder whose six networks are identity maps (f_obs sums its two
// inputs), for hand-traceable values.
LiltabParams identity_params() {
    LiltabParams p;
    p.arch.hidden_representation_size = 1;
    p.arch.output_size = 1;
    p.arch.n_hidden_layers = 0;
    p.arch.hidden_size = 0;
    p.arch.dropout_rate = 0.0;
    auto ident = [] {
        return fixed_mlp({1, 1}, {Tensor::from_rows({{1.0}})}, {Tensor::row_vector({0.0})});
    };
    p.f_value = ident();
    p.g_value = ident();
    p.f_target = ident();
    p.g_target = ident();
    p.f_obs = fixed_mlp({2, 1}, {Tensor::from_rows({{1.0}, {1.0}})},
                        {Tensor::row_vector({0.0})});
    p.g_obs = ident();
    return p;
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

TaskView permute_rows(const TaskView& v, const std::vector<std::size_t>& perm) {
    TaskView out;
    out.features = Tensor(v.n_rows(), v.n_features(), 0.0);
    out.target.resize(v.n_rows());
    for (std::size_t r = 0; r < v.n_rows(); ++r) {
        for (std::size_t c = 0; c < v.n_features(); ++c)
            out.features.at(r, c) = v.features.at(perm[r], c);
        out.target[r] = v.target[perm[r]];
    }
    return out;
}

// Exhaustive-pair oracle for the signed distance mean.
double contrastive_oracle(const Tensor& e, const PairSet& pairs) {
    auto dist = [&](std::size_t i, std::size_t j) {
        double d2 = 0;
        for (std::size_t c = 0; c < e.cols; ++c) {
            const double d = e.at(i, c) - e.at(j, c);
            d2 += d * d;
        }
        return std::sqrt(d2);
    };
    double acc = 0;
    for (auto [i, j] : pairs.same) acc += dist(i, j);
    for (auto [i, j] : pairs.diff) acc -= dist(i, j);
    return acc / static_cast<double>(pairs.same.size() + pairs.diff.size());
}

}  // namespace

TEST_CASE("marginal summary of an identity encoder is the column mean") {
    const LiltabParams p = identity_params();
    TaskView task;
    task.features = Tensor::from_rows({{2.0}, {4.0}});
    task.target = {0, 1};
    const MarginalEncoding enc = encode_marginals(task, p);
    CHECK(enc.nu_bar.at(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(enc.c_bar.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("a singleton task reduces to a plain forward pass") {
    Rng rng(10);
    LiltabArch arch;
    arch.hidden_representation_size = 4;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 4;
    arch.output_size = 3;
    arch.dropout_rate = 0.0;
    const LiltabParams p = LiltabParams::init(arch, rng);
    TaskView task = random_task(1, 3, 2);
    const MarginalEncoding enc = encode_marginals(task, p);
    // mean over one row is the row itself
    Tensor one(1, 1, task.features.at(0, 0));
    const Tensor expect = p.g_value.forward(p.f_value.forward(one));
    for (std::size_t c = 0; c < enc.nu_bar.cols; ++c)
        CHECK(enc.nu_bar.at(0, c) == doctest::Approx(expect.at(0, c)).epsilon(1e-12));
}

TEST_CASE("marginals are invariant to row permutations") {
    Rng rng(4);
    LiltabArch arch;
    arch.hidden_representation_size = 8;
    arch.n_hidden_layers = 2;
    arch.hidden_size = 8;
    arch.output_size = 8;
    const LiltabParams p = LiltabParams::init(arch, rng);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TaskView task = random_task(9, 4, seed);
        std::vector<std::size_t> perm(task.n_rows());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        Rng prng(seed + 99);
        prng.shuffle(perm);
        const MarginalEncoding a = encode_marginals(task, p);
        const MarginalEncoding b = encode_marginals(permute_rows(task, perm), p);
        for (std::size_t i = 0; i < a.nu_bar.size(); ++i)
            CHECK(std::abs(a.nu_bar.data[i] - b.nu_bar.data[i]) < 1e-10);
        for (std::size_t i = 0; i < a.c_bar.size(); ++i)
            CHECK(std::abs(a.c_bar.data[i] - b.c_bar.data[i]) < 1e-10);
    }
}

TEST_CASE("observation encoding traces by hand under identity nets") {
    const LiltabParams p = identity_params();
    TaskView task;
    task.features = Tensor::from_rows({{5.0}});
    task.target = {1};
    MarginalEncoding enc;
    enc.nu_bar = Tensor::from_rows({{3.0}});
    enc.c_bar = Tensor::from_rows({{2.0}});
    const Tensor u = encode_observations(task, enc, p);
    // f_obs sums: (3 + 5) / 1 + (2 + 1) = 11
    CHECK(u.at(0, 0) == doctest::Approx(11.0).epsilon(1e-14));
}

TEST_CASE("observation encodings ignore attribute order") {
    Rng rng(6);
    LiltabArch arch;
    arch.hidden_representation_size = 6;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 6;
    arch.output_size = 5;
    const LiltabParams p = LiltabParams::init(arch, rng);
    TaskView task = random_task(7, 5, 12);
    const MarginalEncoding enc = encode_marginals(task, p);
    const Tensor u = encode_observations(task, enc, p);

    // Reverse the attribute order together with the marginal rows.
    TaskView rev = task;
    MarginalEncoding renc = enc;
    for (std::size_t r = 0; r < task.n_rows(); ++r)
        for (std::size_t c = 0; c < task.n_features(); ++c)
            rev.features.at(r, c) = task.features.at(r, task.n_features() - 1 - c);
    for (std::size_t i = 0; i < enc.nu_bar.rows; ++i)
        for (std::size_t c = 0; c < enc.nu_bar.cols; ++c)
            renc.nu_bar.at(i, c) = enc.nu_bar.at(enc.nu_bar.rows - 1 - i, c);
    const Tensor u2 = encode_observations(rev, renc, p);
    for (std::size_t i = 0; i < u.size(); ++i)
        CHECK(std::abs(u.data[i] - u2.data[i]) < 1e-10);
}

TEST_CASE("observation encodings have shape N x p") {
    Rng rng(8);
    LiltabArch arch;
    arch.hidden_representation_size = 3;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 4;
    arch.output_size = 7;
    const LiltabParams p = LiltabParams::init(arch, rng);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng srng(seed);
        TaskView task = random_task(1 + srng.index(10), 1 + srng.index(6), seed);
        const Tensor u = encode_observations(task, encode_marginals(task, p), p);
        CHECK(u.rows == task.n_rows());
        CHECK(u.cols == 7);
    }
}

TEST_CASE("dataset embedding of a single row equals that row's encoding") {
    Rng rng(14);
    LiltabArch arch;
    arch.hidden_representation_size = 4;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 4;
    arch.output_size = 4;
    const LiltabParams p = LiltabParams::init(arch, rng);
    TaskView task = random_task(1, 3, 3);
    const Tensor u = encode_observations(task, encode_marginals(task, p), p);
    const std::vector<double> e = embed_dataset(task, p);
    for (std::size_t c = 0; c < e.size(); ++c)
        CHECK(e[c] == doctest::Approx(u.at(0, c)).epsilon(1e-12));
}

TEST_CASE("duplicating every row leaves the embedding unchanged") {
    Rng rng(15);
    LiltabArch arch;
    arch.hidden_representation_size = 4;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 4;
    arch.output_size = 4;
    const LiltabParams p = LiltabParams::init(arch, rng);
    TaskView task = random_task(6, 3, 9);
    TaskView doubled;
    doubled.features = Tensor(12, 3, 0.0);
    doubled.target.resize(12);
    for (std::size_t r = 0; r < 12; ++r) {
        for (std::size_t c = 0; c < 3; ++c)
            doubled.features.at(r, c) = task.features.at(r % 6, c);
        doubled.target[r] = task.target[r % 6];
    }
    const std::vector<double> a = embed_dataset(task, p);
    const std::vector<double> b = embed_dataset(doubled, p);
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-10);
}

TEST_CASE("equal halves average to the full embedding under fixed marginals") {
    // With marginals frozen, observation encodings are row-wise, so the mean
    // over all rows equals the mean of the two half means.
    Rng rng(16);
    LiltabArch arch;
    arch.hidden_representation_size = 4;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 4;
    arch.output_size = 4;
    const LiltabParams p = LiltabParams::init(arch, rng);
    TaskView task = random_task(8, 3, 10);
    const MarginalEncoding enc = encode_marginals(task, p);
    const Tensor u = encode_observations(task, enc, p);
    std::vector<double> full(u.cols, 0.0), halves(u.cols, 0.0);
    for (std::size_t r = 0; r < u.rows; ++r)
        for (std::size_t c = 0; c < u.cols; ++c) full[c] += u.at(r, c) / 8.0;
    for (std::size_t c = 0; c < u.cols; ++c) {
        double first = 0, second = 0;
        for (std::size_t r = 0; r < 4; ++r) first += u.at(r, c) / 4.0;
        for (std::size_t r = 4; r < 8; ++r) second += u.at(r, c) / 4.0;
        halves[c] = 0.5 * (first + second);
    }
    for (std::size_t c = 0; c < u.cols; ++c) CHECK(std::abs(full[c] - halves[c]) < 1e-10);
}

TEST_CASE("contrastive loss is zero for identical embeddings") {
    Tensor e(4, 3, 1.5);
    PairSet pairs;
    pairs.same = {{0, 1}, {2, 3}};
    pairs.diff = {{0, 2}, {1, 3}};
    CHECK(contrastive_loss(e, pairs) == 0.0);
}

TEST_CASE("contrastive loss matches the hand-enumerated example") {
    Tensor e = Tensor::from_rows({{0.0}, {0.0}, {3.0}});
    PairSet pairs;
    pairs.same = {{0, 1}};
    pairs.diff = {{0, 2}, {1, 2}};
    CHECK(contrastive_loss(e, pairs) == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("swapping the pair roles negates the loss") {
    Rng rng(19);
    Tensor e(6, 4, 0.0);
    for (double& v : e.data) v = rng.uniform(-1, 1);
    PairSet pairs;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j)
            ((i + j) % 2 == 0 ? pairs.same : pairs.diff).emplace_back(i, j);
    PairSet swapped;
    swapped.same = pairs.diff;
    swapped.diff = pairs.same;
    CHECK(contrastive_loss(e, pairs) ==
          doctest::Approx(-contrastive_loss(e, swapped)).epsilon(1e-12));
}

TEST_CASE("contrastive loss agrees with the exhaustive oracle") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const std::size_t m = 3 + rng.index(8);
        Tensor e(m, 1 + rng.index(5), 0.0);
        for (double& v : e.data) v = rng.uniform(-2, 2);
        PairSet pairs;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                (rng.index(2) == 0 ? pairs.same : pairs.diff).emplace_back(i, j);
        if (pairs.same.empty() && pairs.diff.empty()) continue;
        CHECK(std::abs(contrastive_loss(e, pairs) - contrastive_oracle(e, pairs)) < 1e-12);
    }
}

TEST_CASE("tape contrastive loss equals the plain value and its gradient matches FD") {
    double max_rel = 0.0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Rng rng(seed + 1000);
        const std::size_t m = 4 + rng.index(5);
        const std::size_t p = 2 + rng.index(3);
        Tensor e(m, p, 0.0);
        for (double& v : e.data) v = rng.uniform(-2, 2);
        PairSet pairs;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                (rng.index(2) == 0 ? pairs.same : pairs.diff).emplace_back(i, j);
        if (pairs.same.empty() || pairs.diff.empty()) continue;
        const double norm = 1.0 / static_cast<double>(pairs.same.size() + pairs.diff.size());

        Tape tape;
        Var ev = tape.leaf(e);
        Var loss = tape.scale(tape.sub(tape.pair_distance_sum(ev, pairs.same),
                                       tape.pair_distance_sum(ev, pairs.diff)),
                              norm);
        CHECK(std::abs(tape.value(loss).item() - contrastive_loss(e, pairs)) < 1e-12);
        tape.backward(loss);

        for (int probe = 0; probe < 5; ++probe) {
            const std::size_t elem = rng.index(e.size());
            Tensor hi = e, lo = e;
            hi.data[elem] += 1e-5;
            lo.data[elem] -= 1e-5;
            const double fd =
                (contrastive_loss(hi, pairs) - contrastive_loss(lo, pairs)) / 2e-5;
            const double ad = tape.grad(ev).data[elem];
            if (std::abs(fd) < 1e-8 && std::abs(ad) < 1e-8) continue;
            max_rel = std::max(max_rel, std::abs(ad - fd) /
                                            std::max({std::abs(fd), std::abs(ad), 1e-6}));
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("contrastive batches enumerate every pair") {
    SyntheticSpec spec;
    spec.n_datasets = 2;
    spec.rows = 10;
    spec.features = 4;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    Rng rng(1);
    const ContrastiveBatch batch = build_contrastive_batch(datasets, 2, 2, rng);
    CHECK(batch.pairs.same.size() == 2);
    CHECK(batch.pairs.diff.size() == 4);
    CHECK(batch.groups.size() == 2);
    CHECK(batch.groups[0].n_rows() == 2);
}

TEST_CASE("contrastive batches need two datasets") {
    SyntheticSpec spec;
    spec.n_datasets = 1;
    spec.rows = 10;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    Rng rng(1);
    CHECK_THROWS_AS(build_contrastive_batch(datasets, 1, 2, rng), ConfigError);
}

TEST_CASE("contrastive batches are reproducible from the seed") {
    SyntheticSpec spec;
    spec.n_datasets = 5;
    spec.rows = 12;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    Rng r1(77), r2(77);
    const ContrastiveBatch a = build_contrastive_batch(datasets, 3, 4, r1);
    const ContrastiveBatch b = build_contrastive_batch(datasets, 3, 4, r2);
    CHECK(a.group_ids == b.group_ids);
    for (std::size_t g = 0; g < a.groups.size(); ++g)
        for (std::size_t i = 0; i < a.groups[g].features.size(); ++i)
            CHECK(a.groups[g].features.data[i] == b.groups[g].features.data[i]);
}

namespace {

TrainConfig small_train_config(std::size_t epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.num_epochs = epochs;
    cfg.early_stopping_epochs = epochs == 0 ? 1 : epochs;
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 12;
    cfg.seed = seed;
    return cfg;
}

LiltabArch small_arch() {
    LiltabArch arch;
    arch.hidden_representation_size = 8;
    arch.n_hidden_layers = 1;
    arch.hidden_size = 8;
    arch.output_size = 8;
    arch.dropout_rate = 0.1;
    return arch;
}

}  // namespace

TEST_CASE("training improves the contrastive loss on a separable toy") {
    SyntheticSpec spec;
    spec.n_datasets = 2;
    spec.rows = 30;
    spec.features = 4;
    spec.separation = 6.0;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    const TrainedLiltab trained =
        train_liltab(datasets, small_train_config(60, 3), small_arch());
    REQUIRE(trained.result.loss_history.size() >= 2);
    CHECK(trained.result.best_loss < trained.result.loss_history.front());
}

TEST_CASE("zero-epoch training returns the initialized parameters") {
    SyntheticSpec spec;
    spec.n_datasets = 2;
    spec.rows = 20;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    TrainedLiltab trained = train_liltab(datasets, small_train_config(0, 5), small_arch());
    CHECK(trained.result.loss_history.empty());
    Rng rng(5);
    LiltabParams fresh = LiltabParams::init(small_arch(), rng);
    const std::vector<Tensor*> a = trained.params.parameters();
    const std::vector<Tensor*> b = fresh.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i]->size(); ++j)
            CHECK(a[i]->data[j] == b[i]->data[j]);
}

TEST_CASE("identical seeds give identical trained parameters") {
    SyntheticSpec spec;
    spec.n_datasets = 3;
    spec.rows = 20;
    const std::vector<Dataset> datasets = make_synthetic_corpus(spec);
    TrainedLiltab a = train_liltab(datasets, small_train_config(10, 8), small_arch());
    TrainedLiltab b = train_liltab(datasets, small_train_config(10, 8), small_arch());
    const std::vector<Tensor*> pa = a.params.parameters();
    const std::vector<Tensor*> pb = b.params.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i]->size(); ++j)
            CHECK(pa[i]->data[j] == pb[i]->data[j]);
    CHECK(a.result.loss_history == b.result.loss_history);
}

TEST_CASE("training separates well-separated datasets on held-out rows") {
    SyntheticSpec spec;
    spec.n_datasets = 3;
    spec.rows = 60;
    spec.features = 4;
    spec.separation = 8.0;
    spec.seed = 2;
    const std::vector<Dataset> corpus = make_synthetic_corpus(spec);
    std::vector<Dataset> train_half = corpus, held_out = corpus;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        Dataset& tr = train_half[d];
        Dataset& ho = held_out[d];
        tr.features = Tensor(30, 4, 0.0);
        tr.target.assign(30, 0);
        ho.features = Tensor(30, 4, 0.0);
        ho.target.assign(30, 0);
        for (std::size_t r = 0; r < 30; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                tr.features.at(r, c) = corpus[d].features.at(r, c);
                ho.features.at(r, c) = corpus[d].features.at(30 + r, c);
            }
            tr.target[r] = corpus[d].target[r];
            ho.target[r] = corpus[d].target[30 + r];
        }
    }
    const TrainedLiltab trained =
        train_liltab(train_half, small_train_config(150, 4), small_arch());

    // Embed 6 disjoint 5-row views per held-out dataset.
    std::vector<std::vector<double>> points;
    std::vector<int> labels;
    for (std::size_t d = 0; d < held_out.size(); ++d)
        for (std::size_t v = 0; v < 6; ++v) {
            std::vector<std::size_t> rows, cols{0, 1, 2, 3};
            for (std::size_t r = 0; r < 5; ++r) rows.push_back(v * 5 + r);
            points.push_back(embed_dataset(view_of(held_out[d], rows, cols), trained.params));
            labels.push_back(static_cast<int>(d));
        }
    double same_sum = 0, cross_sum = 0;
    std::size_t same_n = 0, cross_n = 0;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            double d2 = 0;
            for (std::size_t c = 0; c < points[i].size(); ++c) {
                const double d = points[i][c] - points[j][c];
                d2 += d * d;
            }
            if (labels[i] == labels[j]) {
                same_sum += std::sqrt(d2);
                ++same_n;
            } else {
                cross_sum += std::sqrt(d2);
                ++cross_n;
            }
        }
    CHECK(same_sum / static_cast<double>(same_n) < cross_sum / static_cast<double>(cross_n));
}

TEST_CASE("liltab parameters round-trip through files") {
    Rng rng(30);
    const LiltabParams p = LiltabParams::init(small_arch(), rng);
    p.save("liltab_roundtrip");
    LiltabParams q = LiltabParams::load("liltab_roundtrip");
    LiltabParams p_copy = p;
    const std::vector<Tensor*> a = p_copy.parameters();
    const std::vector<Tensor*> b = q.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i]->size(); ++j)
            CHECK(a[i]->data[j] == b[i]->data[j]);
    CHECK(q.arch.hidden_representation_size == p.arch.hidden_representation_size);
}
