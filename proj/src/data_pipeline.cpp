#include "metawarm/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "metawarm/errors.hpp"
#include "metawarm/rng.hpp"

namespace metawarm {

using nlohmann::json;

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void format_double(char* buf, std::size_t n, double v) { std::snprintf(buf, n, "%.17g", v); }

}  // namespace

RawDataset load_csv_raw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open CSV file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": fewer than 2 rows");
    std::vector<std::string> header = split_line(line);
    if (header.size() < 2) throw ConfigError(path + ": need at least one feature column and a target column");
    for (std::string& h : header) h = trim(h);

    RawDataset ds;
    ds.id = std::filesystem::path(path).stem().string();
    ds.feature_names.assign(header.begin(), header.end() - 1);
    const std::size_t ncols = header.size();

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::size_t data_row = lineno - 1;  // 1-based, header excluded
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != ncols)
            throw ConfigError(path + ": row " + std::to_string(data_row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(ncols));
        std::vector<double> vals(ncols);
        for (std::size_t c = 0; c < ncols; ++c) {
            const std::string cell = trim(cells[c]);
            if (cell.empty())
                throw ConfigError(path + ": missing value at row " + std::to_string(data_row) +
                                  ", column \"" + header[c] + "\"");
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v))
                throw ConfigError(path + ": cannot parse value at row " + std::to_string(data_row) +
                                  ", column \"" + header[c] + "\"");
            vals[c] = v;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.size() < 2) throw ConfigError(path + ": fewer than 2 rows");

    ds.features = Tensor(rows.size(), ncols - 1, 0.0);
    ds.target.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c + 1 < ncols; ++c) ds.features.at(r, c) = rows[r][c];
        ds.target[r] = rows[r][ncols - 1];
    }
    return ds;
}

bool has_binary_target(const RawDataset& ds) {
    for (double y : ds.target)
        if (y != 0.0 && y != 1.0) return false;
    return true;
}

Dataset as_binary(const RawDataset& ds) {
    if (!has_binary_target(ds))
        throw ConfigError(ds.id + ": target contains values other than 0 and 1");
    Dataset out;
    out.id = ds.id;
    out.features = ds.features;
    out.feature_names = ds.feature_names;
    out.target.reserve(ds.target.size());
    for (double y : ds.target) out.target.push_back(static_cast<int>(y));
    return out;
}

Dataset load_csv(const std::string& path) { return as_binary(load_csv_raw(path)); }

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write CSV file: " + path);
    for (std::size_t c = 0; c < ds.n_features(); ++c) out << ds.feature_names[c] << ",";
    out << "target\n";
    char buf[40];
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t c = 0; c < ds.n_features(); ++c) {
            format_double(buf, sizeof buf, ds.features.at(r, c));
            out << buf << ",";
        }
        out << ds.target[r] << "\n";
    }
}

Dataset regression_to_binary(const RawDataset& ds, std::uint64_t seed) {
    double mean = 0.0;
    for (double y : ds.target) mean += y;
    mean /= static_cast<double>(ds.target.size());

    std::vector<int> labels(ds.target.size());
    std::size_t ones = 0;
    for (std::size_t i = 0; i < ds.target.size(); ++i) {
        labels[i] = ds.target[i] > mean ? 1 : 0;
        ones += labels[i];
    }
    const std::size_t zeros = labels.size() - ones;
    if (ones == 0 || zeros == 0) throw ConfigError(ds.id + ": constant target");

    const int majority = ones > zeros ? 1 : 0;
    const std::size_t keep_majority = std::min(ones, zeros);

    std::vector<std::size_t> majority_rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == majority) majority_rows.push_back(i);

    Rng rng(seed);
    rng.shuffle(majority_rows);
    majority_rows.resize(keep_majority);
    std::sort(majority_rows.begin(), majority_rows.end());

    std::vector<bool> keep(labels.size(), false);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != majority) keep[i] = true;
    for (std::size_t i : majority_rows) keep[i] = true;

    Dataset out;
    out.id = ds.id;
    out.feature_names = ds.feature_names;
    const std::size_t kept = 2 * keep_majority;
    out.features = Tensor(kept, ds.n_features(), 0.0);
    out.target.reserve(kept);
    std::size_t r = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t c = 0; c < ds.n_features(); ++c)
            out.features.at(r, c) = ds.features.at(i, c);
        out.target.push_back(labels[i]);
        ++r;
    }
    return out;
}

Dataset standardize(const Dataset& ds) {
    Dataset out = ds;
    const std::size_t n = ds.n_rows();
    for (std::size_t c = 0; c < ds.n_features(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += ds.features.at(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double d = ds.features.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        for (std::size_t r = 0; r < n; ++r)
            out.features.at(r, c) = sd > 0.0 ? (ds.features.at(r, c) - mean) / sd : 0.0;
    }
    return out;
}

bool filter_eligible(const Dataset& ds) { return ds.n_rows() <= 10000 && ds.n_features() <= 20; }

std::vector<int> quartile_bins(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const double t1 = sorted[std::min(n - 1, n / 4)];
    const double t2 = sorted[std::min(n - 1, n / 2)];
    const double t3 = sorted[std::min(n - 1, (3 * n) / 4)];
    std::vector<int> bins(n);
    for (std::size_t i = 0; i < n; ++i)
        bins[i] = (values[i] > t1) + (values[i] > t2) + (values[i] > t3);
    return bins;
}

namespace {

double binned_mutual_information(const std::vector<int>& bins, const std::vector<int>& target) {
    const double n = static_cast<double>(bins.size());
    double joint[4][2] = {};
    double pb[4] = {};
    double py[2] = {};
    for (std::size_t i = 0; i < bins.size(); ++i) {
        joint[bins[i]][target[i]] += 1.0;
        pb[bins[i]] += 1.0;
        py[target[i]] += 1.0;
    }
    double mi = 0.0;
    for (int b = 0; b < 4; ++b)
        for (int y = 0; y < 2; ++y) {
            if (joint[b][y] == 0.0) continue;
            mi += (joint[b][y] / n) * std::log(joint[b][y] * n / (pb[b] * py[y]));
        }
    return mi;
}

}  // namespace

std::vector<std::size_t> select_top_features(const Dataset& ds, std::size_t k) {
    if (ds.n_features() < k)
        throw ConfigError(ds.id + ": cannot select " + std::to_string(k) + " features out of " +
                          std::to_string(ds.n_features()));
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t c = 0; c < ds.n_features(); ++c) {
        std::vector<double> col(ds.n_rows());
        for (std::size_t r = 0; r < ds.n_rows(); ++r) col[r] = ds.features.at(r, c);
        scored.emplace_back(binned_mutual_information(quartile_bins(col), ds.target), c);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

std::vector<FewShotTask> generate_fewshot_tasks(const Dataset& ds, std::uint64_t seed) {
    std::vector<std::size_t> cls[2];
    for (std::size_t r = 0; r < ds.n_rows(); ++r) cls[ds.target[r]].push_back(r);
    if (ds.n_rows() < 33) throw ConfigError(ds.id + ": fewer than 33 usable rows");
    if (cls[0].size() < 2 || cls[1].size() < 2)
        throw ConfigError(ds.id + ": fewer than 2 rows of one class");

    const std::vector<std::size_t> selected = select_top_features(ds);

    Rng rng(seed);
    rng.shuffle(cls[0]);
    rng.shuffle(cls[1]);

    // The class receiving the 15-row half of the validation split alternates,
    // starting from whichever class has more rows (ties go to class 1).
    const int first_big = cls[1].size() >= cls[0].size() ? 1 : 0;

    std::vector<FewShotTask> tasks;
    std::size_t next[2] = {0, 0};
    for (std::size_t t = 0;; ++t) {
        const int big = (t % 2 == 0) ? first_big : 1 - first_big;
        const int small = 1 - big;
        const std::size_t need_big = 2 + 15;
        const std::size_t need_small = 2 + 14;
        if (cls[big].size() - next[big] < need_big ||
            cls[small].size() - next[small] < need_small)
            break;

        FewShotTask task;
        task.parent_id = ds.id;
        task.task_id = ds.id + "_t" + std::to_string(t);
        task.selected_features = selected;
        for (int c = 0; c <= 1; ++c)
            for (std::size_t i = 0; i < 2; ++i) task.train_rows.push_back(cls[c][next[c] + i]);
        next[0] += 2;
        next[1] += 2;
        for (std::size_t i = 0; i < 15; ++i) task.val_rows.push_back(cls[big][next[big] + i]);
        for (std::size_t i = 0; i < 14; ++i) task.val_rows.push_back(cls[small][next[small] + i]);
        next[big] += 15;
        next[small] += 14;
        std::sort(task.train_rows.begin(), task.train_rows.end());
        std::sort(task.val_rows.begin(), task.val_rows.end());
        tasks.push_back(std::move(task));
    }
    if (tasks.empty())
        throw ConfigError(ds.id + ": not enough rows of each class to form a 33-row task");
    return tasks;
}

std::vector<FoldSplit> make_folds(const std::vector<std::string>& ids, std::size_t k,
                                  std::uint64_t seed) {
    if (k < 2) throw ConfigError("make_folds: need at least 2 folds");
    if (ids.size() < k) throw ConfigError("make_folds: fewer ids than folds");
    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const std::size_t base = shuffled.size() / k;
    const std::size_t extra = shuffled.size() % k;
    std::vector<FoldSplit> folds;
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        FoldSplit fold;
        fold.fold_index = f;
        for (std::size_t i = 0; i < shuffled.size(); ++i) {
            if (i >= start && i < start + len)
                fold.test_ids.push_back(shuffled[i]);
            else
                fold.train_ids.push_back(shuffled[i]);
        }
        start += len;
        folds.push_back(std::move(fold));
    }
    return folds;
}

void save_tasks_jsonl(const std::vector<FewShotTask>& tasks, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write task manifest: " + path);
    for (const FewShotTask& t : tasks) {
        json j{{"parent_id", t.parent_id},
               {"task_id", t.task_id},
               {"train_rows", t.train_rows},
               {"val_rows", t.val_rows},
               {"selected_features", t.selected_features}};
        out << j.dump() << "\n";
    }
}

std::vector<FewShotTask> load_tasks_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing task manifest: " + path);
    std::vector<FewShotTask> tasks;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        FewShotTask t;
        t.parent_id = j.at("parent_id").get<std::string>();
        t.task_id = j.at("task_id").get<std::string>();
        t.train_rows = j.at("train_rows").get<std::vector<std::size_t>>();
        t.val_rows = j.at("val_rows").get<std::vector<std::size_t>>();
        t.selected_features = j.at("selected_features").get<std::vector<std::size_t>>();
        tasks.push_back(std::move(t));
    }
    return tasks;
}

}  // namespace metawarm
