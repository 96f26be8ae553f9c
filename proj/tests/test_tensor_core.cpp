#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "metawarm/autodiff.hpp"
#include "metawarm/errors.hpp"
#include "metawarm/nn.hpp"
#include "metawarm/rng.hpp"
#include "metawarm/serialize.hpp"
#include "metawarm/train.hpp"

using namespace metawarm;

namespace {

MLP identity_mlp(std::size_t width) {
    MLP net;
    net.layer_sizes = {width, width};
    Tensor w(width, width, 0.0);
    for (std::size_t i = 0; i < width; ++i) w.at(i, i) = 1.0;
    net.weights.push_back(w);
    net.biases.emplace_back(1, width, 0.0);
    return net;
}

// Central finite difference of a scalar-valued function of flat parameters.
double central_difference(const std::function<double(const std::vector<Tensor>&)>& f,
                          std::vector<Tensor> params, std::size_t pi, std::size_t elem,
                          double eps) {
    params[pi].data[elem] += eps;
    const double hi = f(params);
    params[pi].data[elem] -= 2 * eps;
    const double lo = f(params);
    return (hi - lo) / (2 * eps);
}

}  // namespace

TEST_CASE("mlp forward matches hand-computed affine maps") {
    MLP net;
    net.layer_sizes = {1, 1};
    net.weights.push_back(Tensor::from_rows({{2.0}}));
    net.biases.push_back(Tensor::row_vector({1.0}));
    Tensor x = Tensor::from_rows({{3.0}});
    CHECK(net.forward(x).item() == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("relu hidden layer zeroes negatives") {
    MLP net;
    net.layer_sizes = {2, 2, 2};
    Tensor eye(2, 2, 0.0);
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    net.weights = {eye, eye};
    net.biases = {Tensor(1, 2, 0.0), Tensor(1, 2, 0.0)};
    Tensor x = Tensor::from_rows({{-1.0, 2.0}});
    const Tensor y = net.forward(x);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(0, 1) == 2.0);
}

TEST_CASE("two fixed layers match a hand matrix product") {
    MLP net;
    net.layer_sizes = {2, 2, 2};
    net.weights = {Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}}),
                   Tensor::from_rows({{1.0, -1.0}, {2.0, 0.0}})};
    net.biases = {Tensor::row_vector({0.5, -0.5}), Tensor::row_vector({1.0, 1.0})};
    // x = (1, 1): layer 1 -> (4.5, 5.5), relu keeps both, layer 2 ->
    // (4.5 + 11 + 1, -4.5 + 0 + 1) = (16.5, -3.5)
    const Tensor y = net.forward(Tensor::from_rows({{1.0, 1.0}}));
    CHECK(y.at(0, 0) == doctest::Approx(16.5).epsilon(1e-12));
    CHECK(y.at(0, 1) == doctest::Approx(-3.5).epsilon(1e-12));
}

TEST_CASE("tape and plain forward agree") {
    Rng rng(7);
    MLP net = MLP::make({3, 5, 5, 2}, 0.0, rng);
    Tensor x(4, 3, 0.0);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    const Tensor plain = net.forward(x);

    Tape tape;
    MLP::Bound bound = net.bind(tape);
    Var out = net.forward(tape, bound, tape.constant(x), false, nullptr);
    for (std::size_t i = 0; i < plain.size(); ++i)
        CHECK(tape.value(out).data[i] == doctest::Approx(plain.data[i]).epsilon(1e-14));
}

TEST_CASE("square loss gradient is 2w") {
    Tape tape;
    Var w = tape.leaf(Tensor::scalar(3.0));
    Var loss = tape.sum_all(tape.mul(w, w));
    tape.backward(loss);
    CHECK(tape.grad(w).item() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("l2 norm gradient is the unit vector") {
    Tape tape;
    Var x = tape.leaf(Tensor::row_vector({3.0, 4.0}));
    Var loss = tape.l2_norm(x);
    tape.backward(loss);
    CHECK(tape.grad(x).at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(tape.grad(x).at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("l2 norm subgradient at the origin is zero") {
    Tape tape;
    Var x = tape.leaf(Tensor::row_vector({0.0, 0.0}));
    Var loss = tape.l2_norm(x);
    tape.backward(loss);
    CHECK(tape.grad(x).at(0, 0) == 0.0);
    CHECK(tape.grad(x).at(0, 1) == 0.0);
}

TEST_CASE("backward refuses non-scalar losses") {
    Tape tape;
    Var x = tape.leaf(Tensor::row_vector({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), ConfigError);
}

TEST_CASE("mean pooling distributes gradient as 1/N") {
    Tape tape;
    Var x = tape.leaf(Tensor(5, 3, 2.0));
    Var loss = tape.sum_all(tape.mean_over_rows(x));
    tape.backward(loss);
    for (double g : tape.grad(x).data) CHECK(g == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("gradients match central finite differences over random nets") {
    double max_rel_err = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const std::size_t layers = 1 + rng.index(3);
        std::vector<std::size_t> sizes{1 + rng.index(8)};
        for (std::size_t l = 0; l < layers; ++l) sizes.push_back(1 + rng.index(8));
        MLP net = MLP::make(sizes, 0.0, rng);

        Tensor x(2 + rng.index(4), sizes.front(), 0.0);
        for (double& v : x.data) v = rng.uniform(-1.5, 1.5);

        auto loss_value = [&](const std::vector<Tensor>& flat) {
            MLP probe = net;
            std::size_t k = 0;
            for (std::size_t l = 0; l < probe.n_layers(); ++l) {
                probe.weights[l] = flat[k++];
                probe.biases[l] = flat[k++];
            }
            Tape tape;
            MLP::Bound bound = probe.bind(tape);
            Var out = probe.forward(tape, bound, tape.constant(x), false, nullptr);
            // Composite head: exp/log/norm keep every primitive in play.
            Var head = tape.mean_all(tape.exp(tape.scale(out, 0.1)));
            Var loss = tape.sum_list({tape.log(head), tape.l2_norm(out)});
            return tape.value(loss).item();
        };

        std::vector<Tensor> flat;
        for (std::size_t l = 0; l < net.n_layers(); ++l) {
            flat.push_back(net.weights[l]);
            flat.push_back(net.biases[l]);
        }

        Tape tape;
        MLP::Bound bound = net.bind(tape);
        Var out = net.forward(tape, bound, tape.constant(x), false, nullptr);
        Var head = tape.mean_all(tape.exp(tape.scale(out, 0.1)));
        Var loss = tape.sum_list({tape.log(head), tape.l2_norm(out)});
        std::vector<Var> leaves;
        for (std::size_t l = 0; l < net.n_layers(); ++l) {
            leaves.push_back(bound.weights[l]);
            leaves.push_back(bound.biases[l]);
        }
        const std::vector<Tensor> grads = gradients(tape, loss, leaves);

        for (int probe = 0; probe < 6; ++probe) {
            const std::size_t pi = rng.index(flat.size());
            const std::size_t elem = rng.index(flat[pi].size());
            const double fd = central_difference(loss_value, flat, pi, elem, 1e-5);
            const double ad = grads[pi].data[elem];
            if (std::abs(fd) < 1e-8 && std::abs(ad) < 1e-8) continue;
            max_rel_err = std::max(max_rel_err,
                                   std::abs(ad - fd) / std::max({std::abs(fd), std::abs(ad),
                                                                 1e-6}));
        }
    }
    CHECK(max_rel_err < 1e-4);
}

TEST_CASE("dropout in evaluation mode is the identity") {
    Rng rng(11);
    MLP net = MLP::make({4, 6, 3}, 0.5, rng);
    Tensor x(3, 4, 1.0);
    const Tensor a = net.forward(x);
    Rng unused(0);
    const Tensor b = net.forward(x, false, unused);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("dropout masks are reproducible from the seed") {
    Rng r1(5), r2(5);
    Tape t1, t2;
    Tensor x(6, 6, 1.0);
    Var a = t1.dropout(t1.constant(x), 0.4, r1);
    Var b = t2.dropout(t2.constant(x), 0.4, r2);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(t1.value(a).data[i] == t2.value(b).data[i]);
}

TEST_CASE("adam leaves params unchanged under zero gradient and zero decay") {
    Tensor w = Tensor::row_vector({1.0, -2.0});
    Adam adam({&w}, 0.1, 0.0);
    adam.step({Tensor(1, 2, 0.0)});
    CHECK(w.at(0, 0) == 1.0);
    CHECK(w.at(0, 1) == -2.0);
}

TEST_CASE("first adam step moves by about -lr for unit gradient") {
    // t = 1: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps)
    Tensor w = Tensor::scalar(0.0);
    Adam adam({&w}, 0.01, 0.0);
    adam.step({Tensor::scalar(1.0)});
    CHECK(w.item() == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("decoupled weight decay shrinks by (1 - lr*wd)") {
    Tensor w = Tensor::scalar(5.0);
    Adam adam({&w}, 0.01, 0.1);
    adam.step({Tensor::scalar(0.0)});
    CHECK(w.item() == doctest::Approx(5.0 * (1.0 - 0.001)).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients") {
    Tensor w = Tensor::scalar(0.0);
    Adam adam({&w}, 0.01, 0.0);
    CHECK_THROWS_AS(adam.step({Tensor::scalar(std::nan(""))}), NumericError);
}

TEST_CASE("train_loop stops after patience exhausts on constant loss") {
    Tensor w = Tensor::scalar(0.0);
    TrainConfig cfg;
    cfg.num_epochs = 100;
    cfg.early_stopping_epochs = 3;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 1;
    const TrainResult res = train_loop({&w}, cfg, [](std::size_t, Rng&) { return 1.0; });
    CHECK(res.loss_history.size() == 4);  // best epoch plus 3 stalls
}

TEST_CASE("train_loop runs every epoch when the loss keeps falling") {
    Tensor w = Tensor::scalar(0.0);
    TrainConfig cfg;
    cfg.num_epochs = 50;
    cfg.early_stopping_epochs = 3;
    const TrainResult res = train_loop({&w}, cfg, [](std::size_t epoch, Rng&) {
        return 1.0 / (1.0 + static_cast<double>(epoch));
    });
    CHECK(res.loss_history.size() == 50);
    CHECK(res.best_epoch == 49);
}

TEST_CASE("train_loop restores the best-epoch parameters") {
    Tensor w = Tensor::scalar(0.0);
    TrainConfig cfg;
    cfg.num_epochs = 5;
    cfg.early_stopping_epochs = 10;
    const std::vector<double> losses{1.0, 0.5, 0.7, 0.9, 0.8};
    train_loop({&w}, cfg, [&](std::size_t epoch, Rng&) {
        w.data[0] = static_cast<double>(epoch);
        return losses[epoch];
    });
    CHECK(w.item() == 1.0);  // parameters as of the epoch with loss 0.5
}

TEST_CASE("train_loop with zero epochs returns params unchanged") {
    Tensor w = Tensor::scalar(42.0);
    TrainConfig cfg;
    cfg.num_epochs = 0;
    const TrainResult res = train_loop({&w}, cfg, [](std::size_t, Rng&) { return 0.0; });
    CHECK(res.loss_history.empty());
    CHECK(w.item() == 42.0);
}

TEST_CASE("train_loop aborts on non-finite loss") {
    Tensor w = Tensor::scalar(0.0);
    TrainConfig cfg;
    cfg.num_epochs = 3;
    CHECK_THROWS_AS(
        train_loop({&w}, cfg, [](std::size_t, Rng&) { return std::nan(""); }),
        NumericError);
}

TEST_CASE("adam solves a convex scalar problem") {
    Tensor w = Tensor::scalar(0.0);
    TrainConfig cfg;
    cfg.num_epochs = 5000;
    cfg.early_stopping_epochs = 5000;
    cfg.learning_rate = 0.01;
    Adam adam({&w}, cfg.learning_rate, 0.0);
    train_loop({&w}, cfg, [&](std::size_t, Rng&) {
        Tape tape;
        Var wv = tape.leaf(w);
        Var diff = tape.add_const(wv, -2.0);
        Var loss = tape.sum_all(tape.mul(diff, diff));
        adam.step(gradients(tape, loss, {wv}));
        return tape.value(loss).item();
    });
    CHECK(std::abs(w.item() - 2.0) < 1e-2);
}

TEST_CASE("identical seeds give identical loss histories") {
    auto run = [] {
        Rng rng(3);
        MLP net = MLP::make({2, 4, 1}, 0.1, rng);
        TrainConfig cfg;
        cfg.num_epochs = 20;
        cfg.early_stopping_epochs = 20;
        cfg.learning_rate = 0.01;
        cfg.seed = 9;
        std::vector<Tensor*> params = net.parameters();
        Adam adam(params, cfg.learning_rate, 0.0);
        Tensor x(4, 2, 0.5);
        return train_loop(params, cfg, [&](std::size_t, Rng& erng) {
            Tape tape;
            MLP::Bound bound = net.bind(tape);
            Var out = net.forward(tape, bound, tape.constant(x), true, &erng);
            Var loss = tape.mean_all(tape.mul(out, out));
            std::vector<Var> leaves;
            for (std::size_t l = 0; l < net.n_layers(); ++l) {
                leaves.push_back(bound.weights[l]);
                leaves.push_back(bound.biases[l]);
            }
            adam.step(gradients(tape, loss, leaves));
            return tape.value(loss).item();
        }).loss_history;
    };
    const std::vector<double> a = run();
    const std::vector<double> b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("parameter files round-trip bit-exactly") {
    Rng rng(21);
    MLP net = MLP::make({3, 7, 2}, 0.25, rng);
    ParamWriter w;
    w.add_mlp("net", net);
    nlohmann::json hyper;
    hyper["nets"]["net"] = mlp_meta(net);
    w.write("roundtrip_params", "mlp", hyper);

    ParamReader r("roundtrip_params");
    const MLP back = r.mlp("net");
    REQUIRE(back.layer_sizes == net.layer_sizes);
    CHECK(back.dropout_rate == net.dropout_rate);
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].size(); ++i)
            CHECK(back.weights[l].data[i] == net.weights[l].data[i]);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            CHECK(back.biases[l].data[i] == net.biases[l].data[i]);
    }
}
