#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gadtraj/bas.hpp"
#include "gadtraj/data.hpp"
#include "gadtraj/gadformer.hpp"
#include "gadtraj/syngen.hpp"
#include "gadtraj/training.hpp"

namespace gadtraj {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModelKind { gadformer, gru };

inline std::string to_string(ModelKind k) { return k == ModelKind::gadformer ? "gadformer" : "gru"; }

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "gadformer") return ModelKind::gadformer;
    if (s == "gru") return ModelKind::gru;
    throw ConfigError("unknown model kind '" + std::string(s) + "' (expected gadformer or gru)");
}

/// Everything a command needs. Values layer as preset, then config file, then flags.
struct RunConfig {
    std::string preset = "synthetic";
    GenConfig gen;
    ModelConfig model;
    TrainConfig train;
    BasConfig bas;
    ScalerKind scaler = ScalerKind::standard;
    ModelKind model_kind = ModelKind::gadformer;
    std::optional<std::string> data;   // CSV corpus; synthetic generation when absent
    std::uint64_t seed = 7;
    double noise = 0.0;
    double novelty = 0.0;
    std::filesystem::path out = "out";
    bool pca_labels = false;           // label an unlabeled corpus by PCA z-score

    void validate() const {
        gen.validate();
        model.validate();
        train.validate();
        bas.validate();
        if (noise < 0.0 || noise > 1.0) throw ConfigError("noise must lie in [0, 1]");
        if (novelty < 0.0 || novelty > 1.0) throw ConfigError("novelty must lie in [0, 1]");
        if (data && !std::filesystem::exists(*data)) throw ConfigError("data file not found: " + *data);
    }
};

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& dst) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            dst = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
    }
}

} // namespace detail

inline nlohmann::json to_json(const GenConfig& g) {
    return {{"num_trajectories", g.num_trajectories},
            {"length", g.length},
            {"anomaly_fraction", g.anomaly_fraction},
            {"noise_ratio", g.noise_ratio},
            {"novelty_ratio", g.novelty_ratio},
            {"seed", g.seed},
            {"step_length", g.step_length},
            {"start_spread", g.start_spread},
            {"jitter", g.jitter},
            {"curvature", g.curvature},
            {"heading_spread_deg", g.heading_spread_deg},
            {"headings_deg", g.headings_deg},
            {"novel_headings_deg", g.novel_headings_deg},
            {"dispersion_walk", g.dispersion_walk},
            {"teleport_min_steps", g.teleport_min_steps},
            {"teleport_max_steps", g.teleport_max_steps}};
}

inline void merge(GenConfig& g, const nlohmann::json& j) {
    detail::check_keys(j,
                       {"num_trajectories", "length", "anomaly_fraction", "noise_ratio", "novelty_ratio", "seed",
                        "step_length", "start_spread", "jitter", "curvature", "heading_spread_deg", "headings_deg",
                        "novel_headings_deg", "dispersion_walk", "teleport_min_steps", "teleport_max_steps"},
                       "gen");
    detail::take(j, "num_trajectories", g.num_trajectories);
    detail::take(j, "length", g.length);
    detail::take(j, "anomaly_fraction", g.anomaly_fraction);
    detail::take(j, "noise_ratio", g.noise_ratio);
    detail::take(j, "novelty_ratio", g.novelty_ratio);
    detail::take(j, "seed", g.seed);
    detail::take(j, "step_length", g.step_length);
    detail::take(j, "start_spread", g.start_spread);
    detail::take(j, "jitter", g.jitter);
    detail::take(j, "curvature", g.curvature);
    detail::take(j, "heading_spread_deg", g.heading_spread_deg);
    detail::take(j, "headings_deg", g.headings_deg);
    detail::take(j, "novel_headings_deg", g.novel_headings_deg);
    detail::take(j, "dispersion_walk", g.dispersion_walk);
    detail::take(j, "teleport_min_steps", g.teleport_min_steps);
    detail::take(j, "teleport_max_steps", g.teleport_max_steps);
}

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"seq_len", c.seq_len}, {"input_dim", c.input_dim},     {"dim_em", c.dim_em},
            {"dim_ffn", c.dim_ffn}, {"heads", c.heads},             {"blocks", c.blocks},
            {"head_hidden", c.head_hidden}, {"dropout", c.dropout}, {"ln_eps", c.ln_eps}};
}

inline void merge(ModelConfig& c, const nlohmann::json& j) {
    detail::check_keys(
        j, {"seq_len", "input_dim", "dim_em", "dim_ffn", "heads", "blocks", "head_hidden", "dropout", "ln_eps"},
        "model");
    detail::take(j, "seq_len", c.seq_len);
    detail::take(j, "input_dim", c.input_dim);
    detail::take(j, "dim_em", c.dim_em);
    detail::take(j, "dim_ffn", c.dim_ffn);
    detail::take(j, "heads", c.heads);
    detail::take(j, "blocks", c.blocks);
    detail::take(j, "head_hidden", c.head_hidden);
    detail::take(j, "dropout", c.dropout);
    detail::take(j, "ln_eps", c.ln_eps);
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    merge(c, j);
    return c;
}

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"ratios", {t.ratios.train, t.ratios.valid, t.ratios.test}},
            {"normal_ratio", t.normal_ratio},
            {"lr", t.lr},
            {"weight_decay", t.weight_decay},
            {"betas", {t.beta1, t.beta2}},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"patience", t.patience},
            {"clip_max_norm", t.clip_max_norm},
            {"sched_factor", t.sched_factor},
            {"lr_floor", t.lr_floor}};
}

inline void merge(TrainConfig& t, const nlohmann::json& j) {
    detail::check_keys(j,
                       {"ratios", "normal_ratio", "lr", "weight_decay", "betas", "epochs", "batch_size", "patience",
                        "clip_max_norm", "sched_factor", "lr_floor"},
                       "train");
    if (auto it = j.find("ratios"); it != j.end()) {
        auto r = it->get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("train.ratios needs three values");
        t.ratios = {r[0], r[1], r[2]};
    }
    if (auto it = j.find("betas"); it != j.end()) {
        auto b = it->get<std::vector<double>>();
        if (b.size() != 2) throw ConfigError("train.betas needs two values");
        t.beta1 = b[0];
        t.beta2 = b[1];
    }
    detail::take(j, "normal_ratio", t.normal_ratio);
    detail::take(j, "lr", t.lr);
    detail::take(j, "weight_decay", t.weight_decay);
    detail::take(j, "epochs", t.epochs);
    detail::take(j, "batch_size", t.batch_size);
    detail::take(j, "patience", t.patience);
    detail::take(j, "clip_max_norm", t.clip_max_norm);
    detail::take(j, "sched_factor", t.sched_factor);
    detail::take(j, "lr_floor", t.lr_floor);
}

inline nlohmann::json to_json(const RunConfig& r) {
    nlohmann::json j{{"preset", r.preset},
                     {"gen", to_json(r.gen)},
                     {"model", to_json(r.model)},
                     {"train", to_json(r.train)},
                     {"bas", {{"ratio_top_n", r.bas.ratio_top_n}}},
                     {"scaler", to_string(r.scaler)},
                     {"setting", to_string(r.train.setting)},
                     {"model_kind", to_string(r.model_kind)},
                     {"seed", r.seed},
                     {"noise", r.noise},
                     {"novelty", r.novelty},
                     {"pca_labels", r.pca_labels}};
    j["data"] = r.data ? nlohmann::json(*r.data) : nlohmann::json(nullptr);
    return j;
}

/// Overlays the keys present in `j`; unknown keys are rejected.
inline void merge(RunConfig& r, const nlohmann::json& j) {
    detail::check_keys(j,
                       {"preset", "gen", "model", "train", "bas", "scaler", "setting", "model_kind", "seed", "noise",
                        "novelty", "data", "pca_labels", "out"},
                       "config");
    if (auto it = j.find("gen"); it != j.end()) merge(r.gen, *it);
    if (auto it = j.find("model"); it != j.end()) merge(r.model, *it);
    if (auto it = j.find("train"); it != j.end()) merge(r.train, *it);
    if (auto it = j.find("bas"); it != j.end()) {
        detail::check_keys(*it, {"ratio_top_n"}, "bas");
        detail::take(*it, "ratio_top_n", r.bas.ratio_top_n);
    }
    try {
        if (auto it = j.find("scaler"); it != j.end()) r.scaler = parse_scaler(it->get<std::string>());
        if (auto it = j.find("setting"); it != j.end()) r.train.setting = parse_setting(it->get<std::string>());
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    if (auto it = j.find("model_kind"); it != j.end()) r.model_kind = parse_model_kind(it->get<std::string>());
    detail::take(j, "preset", r.preset);
    detail::take(j, "seed", r.seed);
    detail::take(j, "noise", r.noise);
    detail::take(j, "novelty", r.novelty);
    detail::take(j, "pca_labels", r.pca_labels);
    if (auto it = j.find("data"); it != j.end())
        r.data = it->is_null() ? std::nullopt : std::optional<std::string>(it->get<std::string>());
    if (auto it = j.find("out"); it != j.end()) r.out = it->get<std::string>();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

/**
 * Named hyperparameter sets. synthetic, amazon and brightkite carry the
 * published settings; desk is a reduced corpus and model that trains in
 * seconds on one CPU core.
 */
inline RunConfig preset(std::string_view name) {
    RunConfig r;
    r.preset = std::string(name);
    r.model.dim_em = 8;
    r.model.dim_ffn = 2048;
    r.model.heads = 8;
    r.model.blocks = 4;
    r.train.epochs = 100;
    r.train.patience = 10;
    if (name == "synthetic") {
        r.model.seq_len = 72;
        r.model.dropout = 0.0;
        r.train.lr = 1e-5;
        r.train.weight_decay = 1e-5;
        r.train.batch_size = 25;
        r.gen.num_trajectories = 3400;
        r.gen.length = 72;
    } else if (name == "amazon") {
        r.model.seq_len = 72;
        r.model.dropout = 0.05;
        r.train.lr = 1e-5;
        r.train.weight_decay = 1e-5;
        r.train.batch_size = 25;
        r.scaler = ScalerKind::robust;
    } else if (name == "brightkite") {
        r.model.seq_len = 500;
        r.model.dropout = 0.05;
        r.train.lr = 1e-6;
        r.train.weight_decay = 1e-6;
        r.train.batch_size = 250;
        r.scaler = ScalerKind::robust;
        r.pca_labels = true;
    } else if (name == "desk") {
        r.gen.num_trajectories = 800;
        r.gen.length = 24;
        r.model.seq_len = 24;
        r.model.dim_em = 16;
        r.model.dim_ffn = 32;
        r.model.heads = 4;
        r.model.blocks = 2;
        r.model.dropout = 0.0;
        r.train.lr = 3e-4;
        r.train.weight_decay = 1e-5;
        r.train.batch_size = 25;
        r.train.epochs = 30;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected synthetic, amazon, brightkite or desk)");
    }
    return r;
}

} // namespace gadtraj
