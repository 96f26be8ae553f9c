#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "metawarm/data_pipeline.hpp"

namespace metawarm {

// A single JSON document driving every subcommand. Values are addressed by
// dotted paths ("encoder.liltab.dropout_rate"); the METAWARM_SEED environment
// variable overrides the "seed" key.
class ExperimentConfig {
public:
    ExperimentConfig() : doc_(nlohmann::json::object()) {}
    explicit ExperimentConfig(nlohmann::json doc) : doc_(std::move(doc)) {}
    static ExperimentConfig from_file(const std::string& path);

    bool has(const std::string& dotted) const;
    const nlohmann::json* find(const std::string& dotted) const;
    void set(const std::string& dotted, nlohmann::json value);

    template <typename T>
    T get(const std::string& dotted, T fallback) const {
        const nlohmann::json* j = find(dotted);
        return j ? j->get<T>() : fallback;
    }

    template <typename T>
    T require(const std::string& dotted) const;

    std::uint64_t seed() const;

    const nlohmann::json& doc() const { return doc_; }

private:
    nlohmann::json doc_;
};

// Prepared datasets in a directory, sorted by id.
std::vector<Dataset> load_prepared_datasets(const std::string& dir);

struct EmbeddingRow {
    std::string task_id;
    std::string parent_id;
    std::vector<double> values;
};
void save_embeddings_csv(const std::vector<EmbeddingRow>& rows, const std::string& path);
std::vector<EmbeddingRow> load_embeddings_csv(const std::string& path);

void cmd_synth(const ExperimentConfig& cfg);
void cmd_prepare(const ExperimentConfig& cfg);
void cmd_train_encoder(const ExperimentConfig& cfg);
void cmd_embed(const ExperimentConfig& cfg);
void cmd_build_matrix(const ExperimentConfig& cfg);
void cmd_run(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg);

// 2 config error, 3 missing artifact, 4 numeric failure, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace metawarm
