#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "metawarm/rng.hpp"
#include "metawarm/tensor.hpp"

namespace metawarm {

// Adam with decoupled weight decay (applied as lr * wd * param subtraction).
class Adam {
public:
    Adam(std::vector<Tensor*> params, double lr, double weight_decay,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    // grads must match the params order and shapes.
    void step(const std::vector<Tensor>& grads);

    const std::vector<Tensor*>& params() const { return params_; }

private:
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    double lr_, wd_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    std::size_t num_epochs = 100000;
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    std::size_t batch_size = 37;
    std::size_t early_stopping_epochs = 2500;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_history;
    std::size_t best_epoch = 0;  // index into loss_history
    double best_loss = 0.0;
};

// Runs run_epoch until num_epochs, or until early_stopping_epochs consecutive
// epochs pass without a strict improvement of the running-best loss. The
// parameters from the best epoch are restored before returning.
TrainResult train_loop(const std::vector<Tensor*>& params, const TrainConfig& cfg,
                       const std::function<double(std::size_t epoch, Rng& rng)>& run_epoch);

}  // namespace metawarm
