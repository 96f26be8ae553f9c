#include "metawarm/train.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "metawarm/errors.hpp"

namespace metawarm {

Adam::Adam(std::vector<Tensor*> params, double lr, double weight_decay, double beta1,
           double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
    if (lr_ <= 0.0) throw ConfigError("Adam: learning rate must be positive");
    if (wd_ < 0.0) throw ConfigError("Adam: weight decay must be non-negative");
    for (Tensor* p : params_) {
        m_.emplace_back(p->rows, p->cols, 0.0);
        v_.emplace_back(p->rows, p->cols, 0.0);
    }
}

void Adam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw ConfigError("Adam: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k];
        const Tensor& g = grads[k];
        if (!p.same_shape(g)) throw ConfigError("Adam: gradient shape mismatch");
        if (!g.all_finite()) throw NumericError("Adam: non-finite gradient");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g.data[i];
            m_[k].data[i] = beta1_ * m_[k].data[i] + (1.0 - beta1_) * gi;
            v_[k].data[i] = beta2_ * v_[k].data[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m_[k].data[i] / bc1;
            const double vhat = v_[k].data[i] / bc2;
            p.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            if (wd_ > 0.0) p.data[i] -= lr_ * wd_ * p.data[i];
        }
    }
}

TrainResult train_loop(const std::vector<Tensor*>& params, const TrainConfig& cfg,
                       const std::function<double(std::size_t, Rng&)>& run_epoch) {
    if (cfg.learning_rate <= 0.0) throw ConfigError("train_loop: learning rate must be positive");
    if (cfg.batch_size == 0) throw ConfigError("train_loop: batch size must be positive");
    if (cfg.early_stopping_epochs == 0)
        throw ConfigError("train_loop: early stopping patience must be positive");

    TrainResult res;
    res.best_loss = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best;
    for (Tensor* p : params) best.push_back(*p);

    Rng rng(cfg.seed);
    std::size_t stall = 0;
    for (std::size_t epoch = 0; epoch < cfg.num_epochs; ++epoch) {
        const double loss = run_epoch(epoch, rng);
        if (!std::isfinite(loss))
            throw NumericError("train_loop: non-finite loss at epoch " + std::to_string(epoch));
        res.loss_history.push_back(loss);
        if (loss < res.best_loss) {
            res.best_loss = loss;
            res.best_epoch = epoch;
            for (std::size_t k = 0; k < params.size(); ++k) best[k] = *params[k];
            stall = 0;
        } else {
            ++stall;
        }
        if (stall >= cfg.early_stopping_epochs) break;
    }
    for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best[k];
    return res;
}

}  // namespace metawarm
