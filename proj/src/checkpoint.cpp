#include "cgt/checkpoint.hpp"

#include "cgt/error.hpp"

#include <fstream>

namespace cgt {

nlohmann::json to_json(const ModelConfig& c) {
    return {{"window", c.window}, {"nodes", c.nodes},   {"channels", c.channels}, {"hidden", c.hidden},
            {"blocks", c.blocks}, {"heads", c.heads},   {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.window = j.at("window").get<std::size_t>();
    c.nodes = j.at("nodes").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.blocks = j.at("blocks").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

nlohmann::json checkpoint_json(const Model& model, const nlohmann::json& extra) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : model.parameters()) {
        params[p.name] = {{"shape", p.tensor.shape()},
                          {"data", std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())}};
    }
    return {{"schema", "cgt.checkpoint/1"},
            {"config", to_json(model.config())},
            {"config_hash", model.config_hash()},
            {"params", params},
            {"extra", extra}};
}

Model model_from_checkpoint(const nlohmann::json& j) {
    try {
        if (j.at("schema").get<std::string>() != "cgt.checkpoint/1") {
            throw ConfigError("checkpoint: unsupported schema '" + j.at("schema").get<std::string>() + "'");
        }
        Model model(model_config_from_json(j.at("config")));
        if (j.at("config_hash").get<std::string>() != model.config_hash()) {
            throw ConfigError("checkpoint: config hash mismatch");
        }
        const auto& params = j.at("params");
        const auto named = model.parameters();
        if (params.size() != named.size()) {
            throw ConfigError("checkpoint: expected " + std::to_string(named.size()) + " tensors, found " +
                              std::to_string(params.size()));
        }
        for (const auto& p : named) {
            if (!params.contains(p.name)) throw ConfigError("checkpoint: missing tensor '" + p.name + "'");
            const auto& e = params.at(p.name);
            const auto shape = e.at("shape").get<Shape>();
            if (shape != p.tensor.shape()) {
                throw ConfigError("checkpoint: tensor '" + p.name + "' has shape " + shape_str(shape) + ", expected " +
                                  shape_str(p.tensor.shape()));
            }
            const auto data = e.at("data").get<std::vector<double>>();
            if (data.size() != p.tensor.size()) throw ConfigError("checkpoint: tensor '" + p.name + "' size mismatch");
            Tensor t = p.tensor;
            std::copy(data.begin(), data.end(), t.data_mut().begin());
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& extra) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << checkpoint_json(model, extra).dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (extra) *extra = j.value("extra", nlohmann::json::object());
    return model_from_checkpoint(j);
}

}  // namespace cgt
