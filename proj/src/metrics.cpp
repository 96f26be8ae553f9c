#include "metawarm/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "metawarm/d2v.hpp"
#include "metawarm/errors.hpp"
#include "metawarm/rng.hpp"

namespace metawarm {

std::vector<double> dtm_trajectory(const OptimizationTrace& trace,
                                   const PerformanceMatrix& matrix) {
    const std::size_t row = matrix.row_of(trace.dataset_id);
    const std::vector<double>& aucs = matrix.auc[row];
    const double lo = *std::min_element(aucs.begin(), aucs.end());
    const double hi = *std::max_element(aucs.begin(), aucs.end());
    if (hi <= lo)
        throw NumericError("dtm_trajectory: constant score row for " + trace.dataset_id);

    std::vector<double> out;
    double best_scaled = 0.0;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const double scaled = (trace.steps[i].raw_auc - lo) / (hi - lo);
        best_scaled = i == 0 ? scaled : std::max(best_scaled, scaled);
        out.push_back(1.0 - best_scaled);
    }
    return out;
}

AdtmReport adtm(const std::vector<OptimizationTrace>& traces, const PerformanceMatrix& matrix) {
    if (traces.empty()) throw ConfigError("adtm: no traces");
    const std::size_t t_len = traces.front().steps.size();
    for (const OptimizationTrace& t : traces)
        if (t.steps.size() != t_len) throw ConfigError("adtm: traces differ in length");

    AdtmReport report;
    report.method = traces.front().method;
    report.mean_dtm.assign(t_len, 0.0);
    std::map<int, std::pair<std::vector<double>, std::size_t>> folds;
    for (const OptimizationTrace& trace : traces) {
        const std::vector<double> dtm = dtm_trajectory(trace, matrix);
        for (std::size_t i = 0; i < t_len; ++i) report.mean_dtm[i] += dtm[i];
        auto& [sum, count] = folds[trace.fold];
        sum.resize(t_len, 0.0);
        for (std::size_t i = 0; i < t_len; ++i) sum[i] += dtm[i];
        ++count;
    }
    for (double& v : report.mean_dtm) v /= static_cast<double>(traces.size());
    for (auto& [fold, acc] : folds) {
        std::vector<double> mean = acc.first;
        for (double& v : mean) v /= static_cast<double>(acc.second);
        report.per_fold_dtm[fold] = std::move(mean);
    }
    return report;
}

namespace {

double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

ProbeReport pair_accuracy_probe(const EmbedFn& embed, const std::vector<Dataset>& datasets,
                                std::size_t n_pairs, std::size_t repetitions, double gamma,
                                std::uint64_t seed) {
    if (datasets.size() < 2) throw ConfigError("pair_accuracy_probe: need at least 2 datasets");
    if (n_pairs == 0 || repetitions == 0)
        throw ConfigError("pair_accuracy_probe: need pairs and repetitions");

    Rng rng(seed);
    std::vector<double> accuracies;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        std::size_t correct = 0;
        for (std::size_t p = 0; p < n_pairs; ++p) {
            const bool same = p % 2 == 0;
            const BatchPair pair = sample_batch_pair(datasets, same, rng);
            const std::vector<double> e1 = embed(pair.a);
            const std::vector<double> e2 = embed(pair.b);
            const bool predicted_same = same_dataset_probability(e1, e2, gamma) > 0.5;
            if (predicted_same == same) ++correct;
        }
        accuracies.push_back(static_cast<double>(correct) / static_cast<double>(n_pairs));
    }
    ProbeReport report;
    report.repetitions = repetitions;
    report.accuracy_mean =
        std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
        static_cast<double>(repetitions);
    report.accuracy_std = sample_std(accuracies, report.accuracy_mean);
    return report;
}

double calinski_harabasz(const std::vector<std::vector<double>>& embeddings,
                         const std::vector<int>& labels) {
    const std::size_t m = embeddings.size();
    if (m != labels.size()) throw ConfigError("calinski_harabasz: label count mismatch");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < m; ++i) groups[labels[i]].push_back(i);
    const std::size_t k = groups.size();
    if (k < 2) throw ConfigError("calinski_harabasz: need at least 2 labels");
    if (m <= k) throw ConfigError("calinski_harabasz: need more points than labels");

    const std::size_t dim = embeddings.front().size();
    std::vector<double> grand(dim, 0.0);
    for (const std::vector<double>& e : embeddings)
        for (std::size_t c = 0; c < dim; ++c) grand[c] += e[c];
    for (double& v : grand) v /= static_cast<double>(m);

    double between = 0.0, within = 0.0;
    for (const auto& [label, members] : groups) {
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i : members)
            for (std::size_t c = 0; c < dim; ++c) centroid[c] += embeddings[i][c];
        for (double& v : centroid) v /= static_cast<double>(members.size());
        for (std::size_t c = 0; c < dim; ++c) {
            const double d = centroid[c] - grand[c];
            between += static_cast<double>(members.size()) * d * d;
        }
        for (std::size_t i : members)
            for (std::size_t c = 0; c < dim; ++c) {
                const double d = embeddings[i][c] - centroid[c];
                within += d * d;
            }
    }
    if (within == 0.0) return std::numeric_limits<double>::infinity();
    return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(m - k));
}

void ch_probe(ProbeReport& report, const EmbedFn& embed, const std::vector<Dataset>& datasets,
              std::size_t views_per_dataset, std::size_t repetitions, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> ch_values;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        std::vector<std::vector<double>> points;
        std::vector<int> labels;
        for (std::size_t d = 0; d < datasets.size(); ++d)
            for (std::size_t v = 0; v < views_per_dataset; ++v) {
                points.push_back(embed(sample_view(datasets[d], rng)));
                labels.push_back(static_cast<int>(d));
            }
        ch_values.push_back(calinski_harabasz(points, labels));
    }
    report.ch_mean = std::accumulate(ch_values.begin(), ch_values.end(), 0.0) /
                     static_cast<double>(repetitions);
    report.ch_std = sample_std(ch_values, report.ch_mean);
}

FriedmanResult friedman_test(const std::vector<std::vector<double>>& scores,
                             bool lower_is_better) {
    const std::size_t k = scores.size();
    if (k < 2) throw ConfigError("friedman_test: need at least 2 methods");
    const std::size_t n = scores.front().size();
    if (n < 2) throw ConfigError("friedman_test: need at least 2 blocks");
    for (const std::vector<double>& row : scores)
        if (row.size() != n) throw ConfigError("friedman_test: ragged score matrix");

    FriedmanResult res;
    res.mean_ranks.assign(k, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
            return lower_is_better ? scores[a][b] < scores[c][b] : scores[a][b] > scores[c][b];
        });
        std::size_t i = 0;
        while (i < k) {
            std::size_t j = i;
            while (j + 1 < k && scores[order[j + 1]][b] == scores[order[i]][b]) ++j;
            const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t t = i; t <= j; ++t) res.mean_ranks[order[t]] += avg_rank;
            i = j + 1;
        }
    }
    for (double& r : res.mean_ranks) r /= static_cast<double>(n);

    double sum_sq = 0.0;
    for (double r : res.mean_ranks) sum_sq += r * r;
    const double kd = static_cast<double>(k), nd = static_cast<double>(n);
    res.statistic = 12.0 * nd / (kd * (kd + 1.0)) * (sum_sq - kd * (kd + 1.0) * (kd + 1.0) / 4.0);
    return res;
}

double nemenyi_cd(std::size_t k, std::size_t n_blocks, double alpha) {
    // Two-tailed studentized range constants divided by sqrt(2), infinite
    // degrees of freedom, k = 2..10.
    static const double q05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
    static const double q10[] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920};
    if (k < 2 || k > 10) throw ConfigError("nemenyi_cd: k must be in [2, 10]");
    if (n_blocks == 0) throw ConfigError("nemenyi_cd: need at least one block");
    const double* table = nullptr;
    if (alpha == 0.05) table = q05;
    else if (alpha == 0.10) table = q10;
    else throw ConfigError("nemenyi_cd: alpha must be 0.05 or 0.10");
    const double kd = static_cast<double>(k);
    return table[k - 2] * std::sqrt(kd * (kd + 1.0) / (6.0 * static_cast<double>(n_blocks)));
}

FoldSummary aggregate_folds(const std::vector<std::vector<double>>& fold_trajectories) {
    if (fold_trajectories.size() < 2) throw ConfigError("aggregate_folds: need at least 2 folds");
    const std::size_t t_len = fold_trajectories.front().size();
    for (const std::vector<double>& f : fold_trajectories)
        if (f.size() != t_len) throw ConfigError("aggregate_folds: trajectories differ in length");

    FoldSummary out;
    out.mean.assign(t_len, 0.0);
    out.ci_half_width.assign(t_len, 0.0);
    const double nf = static_cast<double>(fold_trajectories.size());
    for (std::size_t i = 0; i < t_len; ++i) {
        std::vector<double> xs;
        for (const std::vector<double>& f : fold_trajectories) xs.push_back(f[i]);
        const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / nf;
        out.mean[i] = mean;
        out.ci_half_width[i] = 1.96 * sample_std(xs, mean) / std::sqrt(nf);
    }
    return out;
}

std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& embeddings) {
    const std::size_t m = embeddings.size();
    if (m == 0) return {};
    const std::size_t d = embeddings.front().size();

    std::vector<double> mean(d, 0.0);
    for (const std::vector<double>& e : embeddings)
        for (std::size_t c = 0; c < d; ++c) mean[c] += e[c];
    for (double& v : mean) v /= static_cast<double>(m);

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const std::vector<double>& e : embeddings)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov[a][b] += (e[a] - mean[a]) * (e[b] - mean[b]);
    for (auto& row : cov)
        for (double& v : row) v /= static_cast<double>(m);

    // Top-2 eigenvectors by deterministic power iteration with deflation.
    auto power_iterate = [&](const std::vector<std::vector<double>>& mat) {
        std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
        double lambda = 0.0;
        for (int it = 0; it < 200; ++it) {
            std::vector<double> w(d, 0.0);
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b < d; ++b) w[a] += mat[a][b] * v[b];
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-300) return std::make_pair(std::vector<double>(d, 0.0), 0.0);
            for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / norm;
            lambda = norm;
        }
        return std::make_pair(v, lambda);
    };

    auto [v1, l1] = power_iterate(cov);
    std::vector<std::vector<double>> deflated = cov;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) deflated[a][b] -= l1 * v1[a] * v1[b];
    auto [v2, l2] = power_iterate(deflated);

    std::vector<std::array<double, 2>> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double p1 = 0.0, p2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            p1 += (embeddings[i][c] - mean[c]) * v1[c];
            p2 += (embeddings[i][c] - mean[c]) * v2[c];
        }
        out[i] = {p1, p2};
    }
    return out;
}

}  // namespace metawarm
