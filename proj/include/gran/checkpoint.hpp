#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <gran/model.hpp>
#include <gran/nn.hpp>

namespace gran {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

// Checkpoint layout: a magic line, a single-line JSON manifest (array names,
// shapes, dtype, byte offsets, plus a free-form "extra" object and the step
// counter), then the raw little-endian float64 payload.
inline constexpr const char* kCheckpointMagic = "GRANCKPT 1";

class CheckpointWriter {
public:
    void add(const std::string& name, const Shape& shape, const std::vector<double>& data) {
        if (static_cast<int>(data.size()) != numel(shape))
            throw std::invalid_argument("CheckpointWriter::add: data does not match shape for " + name);
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = shape;
        entry["dtype"] = "f64";
        entry["offset"] = data_.size() * sizeof(double);
        entry["count"] = data.size();
        entries_.push_back(std::move(entry));
        data_.insert(data_.end(), data.begin(), data.end());
    }

    void set_step(long step) { step_ = step; }
    void set_extra(nlohmann::json extra) { extra_ = std::move(extra); }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
        nlohmann::json manifest;
        manifest["step"] = step_;
        manifest["extra"] = extra_;
        manifest["arrays"] = entries_;
        out << kCheckpointMagic << '\n' << manifest.dump() << '\n';
        out.write(reinterpret_cast<const char*>(data_.data()),
                  static_cast<std::streamsize>(data_.size() * sizeof(double)));
        if (!out) throw std::runtime_error("checkpoint: failed writing " + path.string());
    }

private:
    nlohmann::json entries_ = nlohmann::json::array();
    std::vector<double> data_;
    long step_ = 0;
    nlohmann::json extra_ = nlohmann::json::object();
};

struct CheckpointData {
    long step = 0;
    nlohmann::json extra;
    std::vector<std::string> order;  // array names in file order
    std::map<std::string, std::pair<Shape, std::vector<double>>> arrays;

    const std::vector<double>& get(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw std::runtime_error("checkpoint: missing array \"" + name + "\"");
        return it->second.second;
    }
    bool has(const std::string& name) const { return arrays.count(name) > 0; }
};

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::string magic, manifest_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic)
        throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint file");
    if (!std::getline(in, manifest_line)) throw std::runtime_error("checkpoint: missing manifest in " + path.string());

    nlohmann::json manifest = nlohmann::json::parse(manifest_line);
    const std::streampos data_start = in.tellg();

    CheckpointData data;
    data.step = manifest.at("step").get<long>();
    data.extra = manifest.value("extra", nlohmann::json::object());
    for (const auto& entry : manifest.at("arrays")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto count = entry.at("count").get<std::uint64_t>();
        if (entry.at("dtype").get<std::string>() != "f64")
            throw std::runtime_error("checkpoint: unsupported dtype for " + name);
        if (count != static_cast<std::uint64_t>(numel(shape)))
            throw std::runtime_error("checkpoint: count/shape mismatch for " + name);
        std::vector<double> values(count);
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated data for " + name + " in " + path.string());
        data.order.push_back(name);
        data.arrays.emplace(name, std::make_pair(shape, std::move(values)));
    }
    return data;
}

// --- model-level glue -------------------------------------------------------

inline nlohmann::json config_to_json(const GranConfig& cfg) {
    return nlohmann::json{{"block_size", cfg.block_size}, {"hidden_dim", cfg.hidden_dim},
                          {"rounds", cfg.rounds},         {"num_mixtures", cfg.num_mixtures},
                          {"n_max", cfg.n_max},           {"tie_rounds", cfg.tie_rounds},
                          {"count_all_rows", cfg.count_all_rows}};
}

inline GranConfig config_from_json(const nlohmann::json& j) {
    GranConfig cfg;
    cfg.block_size = j.at("block_size").get<int>();
    cfg.hidden_dim = j.at("hidden_dim").get<int>();
    cfg.rounds = j.at("rounds").get<int>();
    cfg.num_mixtures = j.at("num_mixtures").get<int>();
    cfg.n_max = j.at("n_max").get<int>();
    cfg.tie_rounds = j.at("tie_rounds").get<bool>();
    cfg.count_all_rows = j.at("count_all_rows").get<bool>();
    cfg.validate();
    return cfg;
}

// Writes model parameters, optionally the optimizer state, the step counter
// and any extra metadata (e.g. training-set sizes) to one file.
inline void save_model_checkpoint(const std::filesystem::path& path, GranParams& params, const AdamState* adam,
                                  long step, nlohmann::json extra = nlohmann::json::object()) {
    CheckpointWriter writer;
    extra["config"] = config_to_json(params.cfg);
    auto plist = params.parameters();
    for (const Param* p : plist) writer.add(p->name, p->shape, p->value);
    if (adam) {
        nlohmann::json opt;
        opt["lr"] = adam->config().lr;
        opt["beta1"] = adam->config().beta1;
        opt["beta2"] = adam->config().beta2;
        opt["eps"] = adam->config().eps;
        opt["t"] = adam->step_count();
        extra["adam"] = opt;
        for (std::size_t i = 0; i < plist.size(); ++i) {
            writer.add("adam.m/" + plist[i]->name, plist[i]->shape, adam->first_moments()[i]);
            writer.add("adam.v/" + plist[i]->name, plist[i]->shape, adam->second_moments()[i]);
        }
    }
    writer.set_step(step);
    writer.set_extra(std::move(extra));
    writer.write(path);
}

struct LoadedModel {
    GranParams params;
    AdamState adam;
    bool has_adam = false;
    long step = 0;
    nlohmann::json extra;
};

inline LoadedModel load_model_checkpoint(const std::filesystem::path& path) {
    CheckpointData data = read_checkpoint(path);
    LoadedModel out;
    out.step = data.step;
    out.extra = data.extra;
    out.params = GranParams(config_from_json(data.extra.at("config")));
    auto plist = out.params.parameters();
    for (Param* p : plist) {
        const auto& [shape, values] = data.arrays.at(p->name);
        if (shape != p->shape) throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
        p->value = values;
    }
    if (data.extra.contains("adam")) {
        const auto& opt = data.extra.at("adam");
        AdamConfig cfg;
        cfg.lr = opt.at("lr").get<double>();
        cfg.beta1 = opt.at("beta1").get<double>();
        cfg.beta2 = opt.at("beta2").get<double>();
        cfg.eps = opt.at("eps").get<double>();
        out.adam = AdamState(cfg, plist);
        out.adam.set_step_count(opt.at("t").get<long>());
        for (std::size_t i = 0; i < plist.size(); ++i) {
            out.adam.first_moments()[i] = data.get("adam.m/" + plist[i]->name);
            out.adam.second_moments()[i] = data.get("adam.v/" + plist[i]->name);
        }
        out.has_adam = true;
    }
    return out;
}

}  // namespace gran
