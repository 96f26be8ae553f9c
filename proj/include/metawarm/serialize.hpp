#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "metawarm/nn.hpp"
#include "metawarm/tensor.hpp"

namespace metawarm {

// Parameter files come in pairs: <stem>.json (manifest: kind, hyperparameters,
// tensor index) and <stem>.bin (concatenated little-endian 64-bit floats).
// Round-trips are bit-exact.
class ParamWriter {
public:
    void add(const std::string& name, const Tensor& t);
    void add_mlp(const std::string& prefix, const MLP& net);
    void write(const std::string& stem, const std::string& kind,
               const nlohmann::json& hyperparameters) const;

private:
    struct Entry {
        std::string name;
        std::size_t rows, cols;
        std::vector<double> data;
    };
    std::vector<Entry> entries_;
};

// Architecture metadata for one MLP, stored under hyperparameters["nets"].
nlohmann::json mlp_meta(const MLP& net);

class ParamReader {
public:
    explicit ParamReader(const std::string& stem);

    const std::string& kind() const { return kind_; }
    const nlohmann::json& hyperparameters() const { return hyper_; }

    Tensor tensor(const std::string& name) const;
    MLP mlp(const std::string& prefix) const;

private:
    struct Entry {
        std::size_t rows, cols, offset;
    };
    std::string kind_;
    nlohmann::json hyper_;
    std::map<std::string, Entry> index_;
    std::vector<double> blob_;
    std::map<std::string, nlohmann::json> mlp_meta_;
};

}  // namespace metawarm
