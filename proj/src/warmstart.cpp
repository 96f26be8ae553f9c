#include "metawarm/warmstart.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "metawarm/errors.hpp"

namespace metawarm {

namespace {

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("knn_warmstart: embedding dimension mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

// Config ids of one matrix row ordered by descending AUC, ties by config id.
std::vector<int> row_config_ranking(const PerformanceMatrix& m, std::size_t row) {
    std::vector<std::size_t> order(m.config_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (m.auc[row][a] != m.auc[row][b]) return m.auc[row][a] > m.auc[row][b];
        return m.config_ids[a] < m.config_ids[b];
    });
    std::vector<int> ids(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) ids[i] = m.config_ids[order[i]];
    return ids;
}

}  // namespace

std::vector<int> knn_warmstart(const std::vector<double>& test_embedding,
                               const EmbeddingTable& train_embeddings,
                               const PerformanceMatrix& matrix, std::size_t k) {
    if (train_embeddings.size() < k)
        throw ConfigError("knn_warmstart: fewer than k training embeddings");

    std::vector<std::pair<double, std::size_t>> by_distance;
    for (std::size_t i = 0; i < train_embeddings.size(); ++i)
        by_distance.emplace_back(l2_distance(test_embedding, train_embeddings[i].second), i);
    std::sort(by_distance.begin(), by_distance.end(),
              [&](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first < b.first;
                  return train_embeddings[a.second].first < train_embeddings[b.second].first;
              });
    by_distance.resize(k);

    std::vector<std::vector<int>> rankings;
    for (const auto& [dist, idx] : by_distance)
        rankings.push_back(
            row_config_ranking(matrix, matrix.row_of(train_embeddings[idx].first)));

    // First every dataset's best config in nearest order, then second-best,
    // and so on, skipping duplicates.
    std::vector<int> out;
    std::set<int> seen;
    for (std::size_t depth = 0; out.size() < k && depth < matrix.config_ids.size(); ++depth)
        for (const std::vector<int>& ranking : rankings) {
            if (out.size() >= k) break;
            const int cid = ranking[depth];
            if (seen.insert(cid).second) out.push_back(cid);
        }
    return out;
}

std::vector<int> rank_warmstart(const PerformanceMatrix& matrix, std::size_t k) {
    if (matrix.dataset_ids.empty()) throw ConfigError("rank_warmstart: empty matrix");
    const std::size_t n_configs = matrix.config_ids.size();

    std::vector<std::size_t> credits(n_configs, 0);
    for (const std::vector<double>& row : matrix.auc) {
        std::size_t best = 0;
        bool unique = true;
        for (std::size_t c = 1; c < n_configs; ++c) {
            if (row[c] > row[best]) {
                best = c;
                unique = true;
            } else if (row[c] == row[best]) {
                unique = false;
            }
        }
        if (unique) ++credits[best];
    }

    std::vector<std::size_t> order(n_configs);
    for (std::size_t i = 0; i < n_configs; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (credits[a] != credits[b]) return credits[a] > credits[b];
        return matrix.config_ids[a] < matrix.config_ids[b];
    });

    std::vector<int> out;
    for (std::size_t i = 0; i < order.size() && out.size() < k; ++i) {
        if (credits[order[i]] == 0) break;
        out.push_back(matrix.config_ids[order[i]]);
    }

    if (out.size() < k) {
        // Backfill by mean AUC across datasets.
        std::vector<double> mean(n_configs, 0.0);
        for (const std::vector<double>& row : matrix.auc)
            for (std::size_t c = 0; c < n_configs; ++c) mean[c] += row[c];
        std::vector<std::size_t> by_mean(n_configs);
        for (std::size_t i = 0; i < n_configs; ++i) by_mean[i] = i;
        std::stable_sort(by_mean.begin(), by_mean.end(), [&](std::size_t a, std::size_t b) {
            if (mean[a] != mean[b]) return mean[a] > mean[b];
            return matrix.config_ids[a] < matrix.config_ids[b];
        });
        std::set<int> seen(out.begin(), out.end());
        for (std::size_t i = 0; i < by_mean.size() && out.size() < k; ++i) {
            const int cid = matrix.config_ids[by_mean[i]];
            if (seen.insert(cid).second) out.push_back(cid);
        }
    }
    return out;
}

}  // namespace metawarm
