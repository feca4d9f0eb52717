#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gadtraj/config.hpp"
#include "gadtraj/gadformer.hpp"
#include "gadtraj/gru.hpp"

namespace gadtraj {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view checkpoint_format = "gadtraj-checkpoint";
inline constexpr int checkpoint_version = 1;

/// JSON container: model kind and config, every named parameter, the scaler
/// the model was trained behind, and free-form training metadata.
struct Checkpoint {
    std::string model_kind;
    ModelConfig config;
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> parameters;
    std::optional<ScalerParams> scaler;
    nlohmann::json metadata = nlohmann::json::object();
};

inline nlohmann::json to_json(const ScalerParams& p) {
    return {{"kind", to_string(p.kind)}, {"center", p.center}, {"scale", p.scale}};
}

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
    ScalerParams p;
    p.kind = parse_scaler(j.at("kind").get<std::string>());
    p.center = j.at("center").get<std::vector<double>>();
    p.scale = j.at("scale").get<std::vector<double>>();
    if (p.center.size() != p.scale.size()) throw CheckpointError("scaler center and scale differ in length");
    return p;
}

template <GroupModel Model>
Checkpoint make_checkpoint(const Model& model, const std::optional<ScalerParams>& scaler = std::nullopt,
                           nlohmann::json metadata = nlohmann::json::object()) {
    Checkpoint c;
    c.model_kind = std::string(Model::kind);
    c.config = model.config();
    for (const auto& [name, t] : model.named_parameters())
        c.parameters.push_back({name, {t.shape(), std::vector<double>(t.data().begin(), t.data().end())}});
    c.scaler = scaler;
    c.metadata = std::move(metadata);
    return c;
}

inline nlohmann::json to_json(const Checkpoint& c) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, sv] : c.parameters) params.push_back({{"name", name}, {"shape", sv.first}, {"data", sv.second}});
    return {{"format", checkpoint_format},
            {"version", checkpoint_version},
            {"model_kind", c.model_kind},
            {"config", to_json(c.config)},
            {"parameters", std::move(params)},
            {"scaler", c.scaler ? to_json(*c.scaler) : nlohmann::json(nullptr)},
            {"metadata", c.metadata}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != checkpoint_format) throw CheckpointError("not a gadtraj checkpoint");
        if (j.at("version").get<int>() != checkpoint_version)
            throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
        Checkpoint c;
        c.model_kind = j.at("model_kind").get<std::string>();
        c.config = model_config_from_json(j.at("config"));
        for (const auto& p : j.at("parameters"))
            c.parameters.push_back(
                {p.at("name").get<std::string>(), {p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>()}});
        if (!j.at("scaler").is_null()) c.scaler = scaler_from_json(j.at("scaler"));
        c.metadata = j.value("metadata", nlohmann::json::object());
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + path.string());
    f << to_json(c).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw CheckpointError("cannot open " + path.string());
    try {
        return checkpoint_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

/// Copies checkpoint parameters into `model`. Kind, config, names and shapes must all agree.
template <GroupModel Model>
void load_into(Model& model, const Checkpoint& c) {
    if (c.model_kind != Model::kind)
        throw CheckpointError("checkpoint holds a " + c.model_kind + " model, expected " + std::string(Model::kind));
    if (!(c.config == model.config()))
        throw CheckpointError("checkpoint config " + to_json(c.config).dump() + " does not match model config " +
                              to_json(model.config()).dump());
    auto named = model.named_parameters();
    if (named.size() != c.parameters.size()) throw CheckpointError("checkpoint parameter count does not match model");
    for (std::size_t k = 0; k < named.size(); ++k) {
        const auto& [name, sv] = c.parameters[k];
        if (named[k].first != name) throw CheckpointError("parameter " + std::to_string(k) + " is '" + name +
                                                           "', model expects '" + named[k].first + "'");
        if (named[k].second.shape() != sv.first)
            throw CheckpointError("parameter '" + name + "' has shape " + shape_str(sv.first) + ", model expects " +
                                  shape_str(named[k].second.shape()));
        auto d = named[k].second.mutable_data();
        std::copy(sv.second.begin(), sv.second.end(), d.begin());
    }
}

template <GroupModel Model>
Model model_from_checkpoint(const Checkpoint& c) {
    Model m(c.config, 0);
    load_into(m, c);
    return m;
}

} // namespace gadtraj
