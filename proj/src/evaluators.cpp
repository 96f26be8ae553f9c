#include "metawarm/evaluators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metawarm/errors.hpp"
#include "metawarm/rng.hpp"

namespace metawarm {

EvalTask make_eval_task(const Dataset& parent, const FewShotTask& task) {
    EvalTask out;
    out.id = task.task_id;
    out.features = Tensor(parent.n_rows(), task.selected_features.size(), 0.0);
    for (std::size_t r = 0; r < parent.n_rows(); ++r)
        for (std::size_t c = 0; c < task.selected_features.size(); ++c)
            out.features.at(r, c) = parent.features.at(r, task.selected_features[c]);
    out.target = parent.target;
    out.train_rows = task.train_rows;
    out.val_rows = task.val_rows;
    return out;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ConfigError("roc_auc: length mismatch");
    std::size_t pos = 0;
    for (int y : labels) pos += y;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw ConfigError("roc_auc: both classes required");

    // Mann-Whitney via average ranks.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == 1) rank_sum += rank[k];
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Split {
    Tensor x_train, x_val;
    std::vector<int> y_train;
    std::vector<int> y_val;
};

Split split_task(const EvalTask& task) {
    Split s;
    s.x_train = Tensor(task.train_rows.size(), task.features.cols, 0.0);
    s.x_val = Tensor(task.val_rows.size(), task.features.cols, 0.0);
    for (std::size_t r = 0; r < task.train_rows.size(); ++r) {
        for (std::size_t c = 0; c < task.features.cols; ++c)
            s.x_train.at(r, c) = task.features.at(task.train_rows[r], c);
        s.y_train.push_back(task.target[task.train_rows[r]]);
    }
    for (std::size_t r = 0; r < task.val_rows.size(); ++r) {
        for (std::size_t c = 0; c < task.features.cols; ++c)
            s.x_val.at(r, c) = task.features.at(task.val_rows[r], c);
        s.y_val.push_back(task.target[task.val_rows[r]]);
    }
    int first = s.y_train.empty() ? -1 : s.y_train.front();
    bool mixed = false;
    for (int y : s.y_train) mixed = mixed || (y != first);
    if (!mixed) throw ConfigError(task.id + ": single-class training split");
    return s;
}

// Largest eigenvalue of X^T X by power iteration (deterministic start).
double spectral_bound(const Tensor& x) {
    const std::size_t d = x.cols;
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int it = 0; it < 30; ++it) {
        std::vector<double> xv(x.rows, 0.0);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < d; ++c) xv[r] += x.at(r, c) * v[c];
        std::vector<double> w(d, 0.0);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < d; ++c) w[c] += x.at(r, c) * xv[r];
        double norm = 0.0;
        for (double wv : w) norm += wv * wv;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 1.0;
        for (std::size_t c = 0; c < d; ++c) v[c] = w[c] / norm;
        lambda = norm;
    }
    return lambda;
}

}  // namespace

double eval_elasticnet(const EvalTask& task, const HPConfig& config) {
    const Split s = split_task(task);
    const std::size_t n = s.x_train.rows;
    const std::string& solver = config.text("solver");
    const std::string& penalty = config.has("penalty") ? config.text("penalty") : "l2";
    const double c_value = config.number("C");
    const double tol = config.number("tol");

    // liblinear models the intercept as an extra feature scaled by
    // intercept_scaling and penalizes it; the other solvers leave it free.
    const bool penalize_bias = solver == "liblinear";
    const double bias_feature = penalize_bias ? config.number("intercept_scaling") : 1.0;

    double alpha = 0.0;  // L1 share of the penalty
    bool penalized = true;
    if (penalty == "l1") {
        alpha = 1.0;
    } else if (penalty == "l2") {
        alpha = 0.0;
    } else if (penalty == "elasticnet") {
        alpha = config.number("l1_ratio");
    } else if (penalty == "null") {
        penalized = false;
    } else {
        throw ConfigError("unknown penalty: " + penalty);
    }

    const std::size_t d = s.x_train.cols + 1;  // bias column appended last
    Tensor x(n, d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c + 1 < d; ++c) x.at(r, c) = s.x_train.at(r, c);
        x.at(r, d - 1) = bias_feature;
    }

    const double l1_weight = penalized ? alpha / c_value : 0.0;
    const double l2_weight = penalized ? (1.0 - alpha) / c_value : 0.0;

    // Smooth part: mean log-loss + (l2_weight/2)||w||^2. Fixed step 1/L.
    const double lipschitz = spectral_bound(x) / (4.0 * static_cast<double>(n)) + l2_weight;
    const double step = 1.0 / (1.1 * lipschitz);

    std::vector<double> w(d, 0.0), w_prev(d, 0.0), z(d, 0.0);
    auto objective = [&](const std::vector<double>& wv) {
        double obj = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double margin = 0.0;
            for (std::size_t c = 0; c < d; ++c) margin += x.at(r, c) * wv[c];
            // log(1 + exp(-m*y)) in a stable form
            const double m = s.y_train[r] == 1 ? margin : -margin;
            obj += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
        }
        obj /= static_cast<double>(n);
        for (std::size_t c = 0; c < d; ++c) {
            const bool is_bias = (c == d - 1);
            if (is_bias && !penalize_bias) continue;
            obj += l1_weight * std::abs(wv[c]) + 0.5 * l2_weight * wv[c] * wv[c];
        }
        return obj;
    };

    double t_acc = 1.0;
    double prev_obj = objective(w);
    for (int iter = 0; iter < 5000; ++iter) {
        // Gradient of the smooth part at z.
        std::vector<double> grad(d, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            double margin = 0.0;
            for (std::size_t c = 0; c < d; ++c) margin += x.at(r, c) * z[c];
            const double err = sigmoid(margin) - static_cast<double>(s.y_train[r]);
            for (std::size_t c = 0; c < d; ++c) grad[c] += err * x.at(r, c);
        }
        for (std::size_t c = 0; c < d; ++c) {
            grad[c] /= static_cast<double>(n);
            const bool is_bias = (c == d - 1);
            if (!is_bias || penalize_bias) grad[c] += l2_weight * z[c];
        }

        w_prev = w;
        for (std::size_t c = 0; c < d; ++c) {
            double v = z[c] - step * grad[c];
            const bool is_bias = (c == d - 1);
            if (l1_weight > 0.0 && (!is_bias || penalize_bias)) {
                const double thr = step * l1_weight;
                v = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
            }
            w[c] = v;
        }

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
        for (std::size_t c = 0; c < d; ++c)
            z[c] = w[c] + ((t_acc - 1.0) / t_next) * (w[c] - w_prev[c]);
        t_acc = t_next;

        if (iter % 10 == 9) {
            const double obj = objective(w);
            if (std::abs(prev_obj - obj) <= tol * std::max(1.0, std::abs(obj))) break;
            prev_obj = obj;
        }
    }

    std::vector<double> scores(s.x_val.rows, 0.0);
    for (std::size_t r = 0; r < s.x_val.rows; ++r) {
        double margin = 0.0;
        for (std::size_t c = 0; c + 1 < d; ++c) margin += s.x_val.at(r, c) * w[c];
        margin += bias_feature * w[d - 1];
        scores[r] = sigmoid(margin);
    }
    return roc_auc(scores, s.y_val);
}

namespace {

struct TreeNode {
    bool is_leaf = true;
    double weight = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    int left = -1, right = -1;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(const Tensor& x, std::size_t r) const {
        int cur = 0;
        while (!nodes[cur].is_leaf)
            cur = x.at(r, nodes[cur].feature) <= nodes[cur].threshold ? nodes[cur].left
                                                                      : nodes[cur].right;
        return nodes[cur].weight;
    }
};

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

constexpr double kTreeLambda = 1.0;

double leaf_score(double g, double h) { return g * g / (h + kTreeLambda); }

SplitChoice best_split(const Tensor& x, const std::vector<double>& grad,
                       const std::vector<double>& hess, const std::vector<std::size_t>& rows,
                       const std::vector<std::size_t>& cols, double min_child_weight) {
    double g_total = 0.0, h_total = 0.0;
    for (std::size_t r : rows) {
        g_total += grad[r];
        h_total += hess[r];
    }
    const double parent = leaf_score(g_total, h_total);

    SplitChoice best;
    std::vector<std::size_t> sorted = rows;
    for (std::size_t c : cols) {
        std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
            return x.at(a, c) < x.at(b, c);
        });
        double g_left = 0.0, h_left = 0.0;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
            g_left += grad[sorted[i]];
            h_left += hess[sorted[i]];
            const double v = x.at(sorted[i], c), v_next = x.at(sorted[i + 1], c);
            if (v == v_next) continue;
            const double h_right = h_total - h_left;
            if (h_left < min_child_weight || h_right < min_child_weight) continue;
            const double gain =
                leaf_score(g_left, h_left) + leaf_score(g_total - g_left, h_right) - parent;
            // Columns ascend and thresholds ascend within a column, so a
            // strict comparison keeps the first of any exact tie.
            if (gain > best.gain) {
                best.found = true;
                best.feature = c;
                best.threshold = 0.5 * (v + v_next);
                best.gain = gain;
            }
        }
    }
    return best;
}

int grow_tree(Tree& tree, const Tensor& x, const std::vector<double>& grad,
              const std::vector<double>& hess, std::vector<std::size_t> rows,
              const std::vector<std::size_t>& tree_cols, std::size_t depth,
              std::size_t max_depth, double min_child_weight, double colsample_bylevel,
              Rng& rng) {
    double g = 0.0, h = 0.0;
    for (std::size_t r : rows) {
        g += grad[r];
        h += hess[r];
    }
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    tree.nodes[node_id].weight = -g / (h + kTreeLambda);

    if (depth >= max_depth || rows.size() < 2) return node_id;

    // Column subsample per level.
    std::vector<std::size_t> level_cols = tree_cols;
    const std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(colsample_bylevel *
                                              static_cast<double>(tree_cols.size()))));
    if (keep < tree_cols.size()) {
        std::vector<std::size_t> picked = rng.sample_indices(tree_cols.size(), keep);
        std::sort(picked.begin(), picked.end());
        level_cols.clear();
        for (std::size_t i : picked) level_cols.push_back(tree_cols[i]);
    }

    const SplitChoice split = best_split(x, grad, hess, rows, level_cols, min_child_weight);
    if (!split.found || split.gain <= 0.0) return node_id;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows)
        (x.at(r, split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const int left = grow_tree(tree, x, grad, hess, std::move(left_rows), tree_cols, depth + 1,
                               max_depth, min_child_weight, colsample_bylevel, rng);
    const int right = grow_tree(tree, x, grad, hess, std::move(right_rows), tree_cols, depth + 1,
                                max_depth, min_child_weight, colsample_bylevel, rng);
    tree.nodes[node_id].is_leaf = false;
    tree.nodes[node_id].feature = split.feature;
    tree.nodes[node_id].threshold = split.threshold;
    tree.nodes[node_id].left = left;
    tree.nodes[node_id].right = right;
    return node_id;
}

}  // namespace

double eval_gbt(const EvalTask& task, const HPConfig& config, std::uint64_t seed) {
    const Split s = split_task(task);
    const std::size_t n = s.x_train.rows;
    const std::size_t d = s.x_train.cols;

    const std::int64_t n_estimators = config.integer("n_estimators");
    const double learning_rate = config.number("learning_rate");
    const std::string& booster = config.text("booster");
    const double subsample = config.number("subsample");
    const double min_child_weight = config.number("min_child_weight");
    const double colsample_bytree = config.number("colsample_bytree");
    const double colsample_bylevel = config.number("colsample_bylevel");
    const std::size_t max_depth = static_cast<std::size_t>(config.integer("max_depth"));

    Rng rng(seed);
    std::vector<double> margin_train(n, 0.0);
    std::vector<Tree> trees;
    std::vector<double> linear_w;  // gblinear: weights + trailing bias
    if (booster == "gblinear") linear_w.assign(d + 1, 0.0);

    for (std::int64_t round = 0; round < n_estimators; ++round) {
        std::vector<double> grad(n, 0.0), hess(n, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(margin_train[r]);
            grad[r] = p - static_cast<double>(s.y_train[r]);
            hess[r] = std::max(p * (1.0 - p), 1e-16);
        }

        const std::size_t n_rows = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::round(subsample * static_cast<double>(n))));
        std::vector<std::size_t> rows = n_rows < n ? rng.sample_indices(n, n_rows)
                                                   : rng.sample_indices(n, n);

        if (booster == "gbtree") {
            const std::size_t n_cols = std::max<std::size_t>(
                1, static_cast<std::size_t>(
                       std::ceil(colsample_bytree * static_cast<double>(d))));
            std::vector<std::size_t> cols = rng.sample_indices(d, n_cols);
            std::sort(cols.begin(), cols.end());

            Tree tree;
            grow_tree(tree, s.x_train, grad, hess, std::move(rows), cols, 0, max_depth,
                      min_child_weight, colsample_bylevel, rng);
            for (std::size_t r = 0; r < n; ++r)
                margin_train[r] += learning_rate * tree.predict(s.x_train, r);
            trees.push_back(std::move(tree));
        } else if (booster == "gblinear") {
            // One Newton-style coordinate pass per round on the sampled rows.
            double g_b = 0.0, h_b = 0.0;
            for (std::size_t r : rows) {
                g_b += grad[r];
                h_b += hess[r];
            }
            const double bias_delta = learning_rate * (-g_b / (h_b + 1.0));
            linear_w[d] += bias_delta;
            for (std::size_t r = 0; r < n; ++r) margin_train[r] += bias_delta;

            for (std::size_t c = 0; c < d; ++c) {
                double g_c = 0.0, h_c = 0.0;
                for (std::size_t r : rows) {
                    const double p = sigmoid(margin_train[r]);
                    const double gr = p - static_cast<double>(s.y_train[r]);
                    const double hr = std::max(p * (1.0 - p), 1e-16);
                    g_c += gr * s.x_train.at(r, c);
                    h_c += hr * s.x_train.at(r, c) * s.x_train.at(r, c);
                }
                const double delta = learning_rate * (-g_c / (h_c + 1.0));
                linear_w[c] += delta;
                for (std::size_t r = 0; r < n; ++r)
                    margin_train[r] += delta * s.x_train.at(r, c);
            }
        } else {
            throw ConfigError("unknown booster: " + booster);
        }
    }

    std::vector<double> scores(s.x_val.rows, 0.0);
    for (std::size_t r = 0; r < s.x_val.rows; ++r) {
        double margin = 0.0;
        if (booster == "gbtree") {
            for (const Tree& tree : trees) margin += learning_rate * tree.predict(s.x_val, r);
        } else {
            for (std::size_t c = 0; c < d; ++c) margin += linear_w[c] * s.x_val.at(r, c);
            margin += linear_w[d];
        }
        scores[r] = sigmoid(margin);
    }
    return roc_auc(scores, s.y_val);
}

}  // namespace metawarm
