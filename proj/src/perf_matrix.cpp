#include "metawarm/perf_matrix.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "metawarm/errors.hpp"

namespace metawarm {

std::size_t PerformanceMatrix::row_of(const std::string& dataset_id) const {
    for (std::size_t i = 0; i < dataset_ids.size(); ++i)
        if (dataset_ids[i] == dataset_id) return i;
    throw ConfigError("dataset not in matrix: " + dataset_id);
}

std::size_t PerformanceMatrix::col_of(int config_id) const {
    for (std::size_t i = 0; i < config_ids.size(); ++i)
        if (config_ids[i] == config_id) return i;
    throw ConfigError("config not in matrix: " + std::to_string(config_id));
}

double PerformanceMatrix::at(const std::string& dataset_id, int config_id) const {
    return auc[row_of(dataset_id)][col_of(config_id)];
}

bool PerformanceMatrix::row_constant(std::size_t row) const {
    const std::vector<double>& r = auc[row];
    for (double v : r)
        if (v != r.front()) return false;
    return true;
}

std::vector<std::string> PerformanceMatrix::flagged_constant_rows() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < dataset_ids.size(); ++i)
        if (row_constant(i)) out.push_back(dataset_ids[i]);
    return out;
}

namespace {

// Stable per-cell seed independent of evaluation order.
std::uint64_t cell_seed(std::uint64_t base, std::size_t row, std::size_t col) {
    std::uint64_t h = base ^ (0x9e3779b97f4a7c15ULL + (row << 32) + col);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

}  // namespace

PerformanceMatrix build_matrix(const std::vector<EvalTask>& tasks, const ConfigPool& pool,
                               const TaskEvaluator& evaluator, std::uint64_t seed,
                               std::size_t jobs) {
    if (tasks.empty()) throw ConfigError("build_matrix: no tasks");
    if (pool.size() == 0) throw ConfigError("build_matrix: empty pool");
    if (jobs == 0) jobs = 1;

    std::vector<std::vector<double>> cells(tasks.size(),
                                           std::vector<double>(pool.size(), 0.0));
    std::vector<std::string> failures(tasks.size());

    const std::size_t total = tasks.size() * pool.size();
    std::atomic<std::size_t> next{0};
    std::mutex fail_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= total) return;
            const std::size_t row = k / pool.size();
            const std::size_t col = k % pool.size();
            if (!failures[row].empty()) continue;
            try {
                cells[row][col] = evaluator(tasks[row], pool.configs[col],
                                            cell_seed(seed, row, col));
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (failures[row].empty()) failures[row] = e.what();
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    PerformanceMatrix m;
    for (const HPConfig& c : pool.configs) m.config_ids.push_back(c.config_id);
    for (std::size_t row = 0; row < tasks.size(); ++row) {
        if (!failures[row].empty()) {
            std::cerr << "warning: excluding dataset " << tasks[row].id
                      << " from the matrix: " << failures[row] << "\n";
            continue;
        }
        m.dataset_ids.push_back(tasks[row].id);
        m.auc.push_back(std::move(cells[row]));
    }
    if (m.dataset_ids.empty()) throw NumericError("build_matrix: every dataset failed");
    for (const std::string& id : m.flagged_constant_rows())
        std::cerr << "warning: dataset " << id << " has a constant score row\n";
    return m;
}

void save_matrix(const PerformanceMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write matrix: " + path);
    out << "dataset_id";
    for (int id : m.config_ids) out << "," << id;
    out << "\n";
    char buf[40];
    for (std::size_t r = 0; r < m.dataset_ids.size(); ++r) {
        out << m.dataset_ids[r];
        for (double v : m.auc[r]) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

PerformanceMatrix submatrix(const PerformanceMatrix& m, const std::vector<std::string>& ids) {
    PerformanceMatrix out;
    out.config_ids = m.config_ids;
    for (const std::string& id : ids) {
        out.dataset_ids.push_back(id);
        out.auc.push_back(m.auc[m.row_of(id)]);
    }
    return out;
}

PerformanceMatrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing matrix file: " + path);
    PerformanceMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty matrix file");
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                first = false;
                continue;
            }
            m.config_ids.push_back(std::stoi(cell));
        }
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        m.dataset_ids.push_back(cell);
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != m.config_ids.size())
            throw ConfigError(path + ": row " + m.dataset_ids.back() + " has " +
                              std::to_string(row.size()) + " entries, expected " +
                              std::to_string(m.config_ids.size()));
        m.auc.push_back(std::move(row));
    }
    return m;
}

}  // namespace metawarm
