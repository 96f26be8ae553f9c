#include "metawarm/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "metawarm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are little-endian; add byte swapping for this platform");

namespace metawarm {

using nlohmann::json;

void ParamWriter::add(const std::string& name, const Tensor& t) {
    entries_.push_back(Entry{name, t.rows, t.cols, t.data});
}

void ParamWriter::add_mlp(const std::string& prefix, const MLP& net) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        add(prefix + ".W" + std::to_string(l), net.weights[l]);
        add(prefix + ".b" + std::to_string(l), net.biases[l]);
    }
}

void ParamWriter::write(const std::string& stem, const std::string& kind,
                        const json& hyperparameters) const {
    json manifest;
    manifest["format"] = "metawarm-params-v1";
    manifest["kind"] = kind;
    manifest["hyperparameters"] = hyperparameters;
    json tensors = json::array();
    std::size_t offset = 0;
    for (const Entry& e : entries_) {
        tensors.push_back({{"name", e.name},
                           {"rows", e.rows},
                           {"cols", e.cols},
                           {"offset", offset}});
        offset += e.data.size();
    }
    manifest["tensors"] = tensors;

    std::ofstream mf(stem + ".json");
    if (!mf) throw MissingArtifactError("cannot write " + stem + ".json");
    mf << manifest.dump(2) << "\n";

    std::ofstream bf(stem + ".bin", std::ios::binary);
    if (!bf) throw MissingArtifactError("cannot write " + stem + ".bin");
    for (const Entry& e : entries_) {
        bf.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    }
}

json mlp_meta(const MLP& net) {
    return json{{"layer_sizes", net.layer_sizes},
                {"dropout_rate", net.dropout_rate},
                {"relu_on_output", net.relu_on_output}};
}

ParamReader::ParamReader(const std::string& stem) {
    std::ifstream mf(stem + ".json");
    if (!mf) throw MissingArtifactError("missing parameter manifest: " + stem + ".json");
    json manifest = json::parse(mf);
    if (manifest.value("format", "") != "metawarm-params-v1")
        throw ConfigError("unsupported parameter format in " + stem + ".json");
    kind_ = manifest.value("kind", "");
    hyper_ = manifest.value("hyperparameters", json::object());

    std::ifstream bf(stem + ".bin", std::ios::binary);
    if (!bf) throw MissingArtifactError("missing parameter blob: " + stem + ".bin");
    bf.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(bf.tellg());
    bf.seekg(0, std::ios::beg);
    if (bytes % sizeof(double) != 0)
        throw ConfigError("parameter blob size is not a multiple of 8: " + stem + ".bin");
    blob_.resize(bytes / sizeof(double));
    bf.read(reinterpret_cast<char*>(blob_.data()), static_cast<std::streamsize>(bytes));

    for (const auto& t : manifest.at("tensors")) {
        Entry e{t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                t.at("offset").get<std::size_t>()};
        if (e.offset + e.rows * e.cols > blob_.size())
            throw ConfigError("tensor extends past end of blob: " + stem + ".bin");
        index_[t.at("name").get<std::string>()] = e;
    }
}

Tensor ParamReader::tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("tensor not found in manifest: " + name);
    const Entry& e = it->second;
    Tensor t(e.rows, e.cols, 0.0);
    std::memcpy(t.data.data(), blob_.data() + e.offset, e.rows * e.cols * sizeof(double));
    return t;
}

MLP ParamReader::mlp(const std::string& prefix) const {
    const json& nets = hyper_.at("nets");
    const json& meta = nets.at(prefix);
    MLP net;
    net.layer_sizes = meta.at("layer_sizes").get<std::vector<std::size_t>>();
    net.dropout_rate = meta.value("dropout_rate", 0.0);
    net.relu_on_output = meta.value("relu_on_output", false);
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        net.weights.push_back(tensor(prefix + ".W" + std::to_string(l)));
        net.biases.push_back(tensor(prefix + ".b" + std::to_string(l)));
    }
    return net;
}

}  // namespace metawarm
