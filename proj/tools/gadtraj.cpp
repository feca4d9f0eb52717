// gadtraj: generate corpora, train and score group anomaly detectors, run the
// robustness grid.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gadtraj/gadtraj.hpp"

namespace fs = std::filesystem;
using namespace gadtraj;

namespace {

struct Flags {
    std::optional<std::string> config, preset, out, scaler, setting, model, data;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise, novelty;
    std::optional<std::string> checkpoint, scores;
    double threshold = 0.5;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--preset", f.preset, "synthetic | amazon | brightkite | desk");
    cmd->add_option("--seed", f.seed, "base seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--scaler", f.scaler, "standard | robust");
    cmd->add_option("--setting", f.setting, "unsupervised | semi");
    cmd->add_option("--model", f.model, "gadformer | gru");
    cmd->add_option("--noise", f.noise, "fraction of trajectories perturbed");
    cmd->add_option("--novelty", f.novelty, "fraction of evaluation normals replaced by novel paths");
    cmd->add_option("--data", f.data, "tabular CSV corpus instead of a generated one")->check(CLI::ExistingFile);
}

// preset, then config file, then flags
RunConfig resolve(const Flags& f) {
    std::optional<nlohmann::json> file;
    if (f.config) file = read_json_file(*f.config);
    std::string name = "synthetic";
    if (file && file->contains("preset")) name = (*file)["preset"].get<std::string>();
    if (f.preset) name = *f.preset;
    RunConfig cfg = preset(name);
    if (file) merge(cfg, *file);
    cfg.preset = name;
    nlohmann::json over = nlohmann::json::object();
    if (f.seed) over["seed"] = *f.seed;
    if (f.scaler) over["scaler"] = *f.scaler;
    if (f.setting) over["setting"] = *f.setting;
    if (f.model) over["model_kind"] = *f.model;
    if (f.noise) over["noise"] = *f.noise;
    if (f.novelty) over["novelty"] = *f.novelty;
    if (f.data) over["data"] = *f.data;
    if (f.out) over["out"] = *f.out;
    merge(cfg, over);
    cfg.validate();
    return cfg;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << j.dump(2) << '\n';
}

std::vector<std::optional<int>> labels_of(const GroupDataset& ds) {
    std::vector<std::optional<int>> out;
    for (const auto& t : ds.trajectories) out.push_back(t.label);
    return out;
}

// Corpus scaled by the checkpoint's scaler and padded to the model length.
std::vector<PaddedGroup> checkpoint_inputs(const Checkpoint& ck, const GroupDataset& corpus) {
    GroupDataset ds = ck.scaler ? apply_scaler(corpus, *ck.scaler) : corpus;
    return pad_dataset(ds, ck.config.seq_len);
}

int cmd_generate(const RunConfig& cfg) {
    if (cfg.data) throw ConfigError("generate does not take --data");
    fs::create_directories(cfg.out);
    auto ds = load_corpus(cfg);
    ds = inject_noise(std::move(ds), cfg.noise, derive_seed(cfg.seed, seed_stream::noise));
    const auto path = cfg.out / "corpus.csv";
    save_tabular_csv(ds, path);
    write_manifest(cfg.out, "generate", to_json(cfg), cfg.seed, {path});
    std::cout << "wrote " << path.string() << ": " << ds.size() << " trajectories, " << ds.anomaly_count()
              << " anomalous\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const auto corpus = load_corpus(cfg);
    auto run = run_configured_model(corpus, cfg, cfg.out);
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json summary{{"model", to_string(cfg.model_kind)},
                           {"best_epoch", run.result.best_epoch},
                           {"epochs_run", run.result.history.size()},
                           {"loss", {{"train", run.result.train.loss}, {"valid", run.result.valid.loss}, {"test", run.result.test.loss}}},
                           {"valid", {{"roc", opt(run.valid.roc)}, {"auprc", opt(run.valid.auprc)}}},
                           {"test", {{"roc", opt(run.test.roc)}, {"auprc", opt(run.test.auprc)}}},
                           {"warnings", run.warnings}};
    write_json(cfg.out / "train_summary.json", summary);
    run.artifacts.push_back(cfg.out / "train_summary.json");
    write_manifest(cfg.out, "train", to_json(cfg), cfg.seed, run.artifacts);
    std::cout << summary.dump(2) << '\n';
    return 0;
}

template <class Model>
ScoredSplit score_with(const Checkpoint& ck, const std::vector<PaddedGroup>& groups) {
    return score_groups(model_from_checkpoint<Model>(ck), groups);
}

int cmd_score(const RunConfig& cfg, const Flags& f) {
    if (!f.checkpoint) throw ConfigError("score needs --checkpoint");
    const auto ck = load_checkpoint(*f.checkpoint);
    const auto groups = checkpoint_inputs(ck, load_corpus(cfg));
    const auto s = ck.model_kind == "gru" ? score_with<GruBaseline>(ck, groups) : score_with<GadFormer>(ck, groups);
    fs::create_directories(cfg.out);
    const auto path = cfg.out / "scores.csv";
    {
        std::ofstream out(path, std::ios::binary);
        write_scores_csv(out, {{"all", &s}});
    }
    write_manifest(cfg.out, "score", to_json(cfg), cfg.seed, {path});
    std::cout << "wrote " << path.string() << ": " << s.ids.size() << " scores\n";
    return 0;
}

int cmd_bas(const RunConfig& cfg, const Flags& f) {
    if (!f.checkpoint) throw ConfigError("bas needs --checkpoint");
    const auto ck = load_checkpoint(*f.checkpoint);
    if (ck.model_kind != "gadformer") throw ConfigError("BAS needs a gadformer checkpoint, got " + ck.model_kind);
    const auto corpus = load_corpus(cfg);
    const auto model = model_from_checkpoint<GadFormer>(ck);
    const auto report = compute_bas(collect_attention(model, checkpoint_inputs(ck, corpus)), cfg.bas);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    const auto labels = labels_of(corpus);
    const bool labeled = corpus.labeled_count() == corpus.size();
    auto files = export_bas_report(report, labeled ? &labels : nullptr, cfg.out / "bas");

    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t b = 0; b < report.block_means.size(); ++b) {
        nlohmann::json row{{"block", b}, {"mean_bas", report.block_means[b]}, {"top_n", report.top_n[b]}};
        if (labeled) {
            ScoredSet s;
            for (std::size_t m = 0; m < report.bas.size(); ++m) {
                s.scores.push_back(report.bas[m][b]);
                s.labels.push_back(*labels[m]);
            }
            row["roc"] = s.positives() && s.negatives() ? nlohmann::json(auroc(s)) : nlohmann::json(nullptr);
        }
        blocks.push_back(row);
    }
    const auto summary = cfg.out / "bas" / "bas_summary.json";
    write_json(summary, {{"blocks", blocks}, {"warnings", report.warnings}});
    files.push_back(summary);
    write_manifest(cfg.out, "bas", to_json(cfg), cfg.seed, files);
    std::cout << "wrote " << files.size() << " BAS files to " << (cfg.out / "bas").string() << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const Flags& f) {
    const fs::path scores = f.scores ? fs::path(*f.scores) : cfg.out / "scores.csv";
    std::ifstream in(scores);
    if (!in) throw ConfigError("cannot open scores " + scores.string());
    const auto table = read_scores_csv(in);
    nlohmann::json report{{"scores", scores.generic_string()}, {"splits", nlohmann::json::object()}};
    std::vector<std::string> names;
    for (const auto& s : table.split)
        if (std::find(names.begin(), names.end(), s) == names.end()) names.push_back(s);
    for (const auto& name : names) {
        ScoredSet set;
        for (std::size_t i = 0; i < table.ids.size(); ++i)
            if (table.split[i] == name && table.labels[i]) {
                set.scores.push_back(table.scores[i]);
                set.labels.push_back(*table.labels[i]);
            }
        report["splits"][name] = evaluation_report(set, f.threshold);
    }
    fs::create_directories(cfg.out);
    const auto path = cfg.out / "eval.json";
    write_json(path, report);
    write_manifest(cfg.out, "evaluate", to_json(cfg), cfg.seed, {path});
    for (const auto& name : names)
        std::cout << name << ": roc=" << report["splits"][name]["roc"].dump()
                  << " auprc=" << report["splits"][name]["auprc"].dump() << '\n';
    return 0;
}

int cmd_experiment(const RunConfig& cfg) {
    auto outcome = run_experiment(cfg, cfg.out, experiment_grid(!cfg.data), grid_threads(), &std::cerr);
    write_manifest(cfg.out, "experiment", to_json(cfg), cfg.seed, outcome.artifacts);
    std::cout << summary_table(outcome.summary["rows"]);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group anomaly detection on trajectories"};
    app.require_subcommand(1);
    Flags f;
    auto* gen = app.add_subcommand("generate", "write a synthetic corpus as tabular CSV");
    auto* trn = app.add_subcommand("train", "train a model; writes checkpoint, history and scores");
    auto* sco = app.add_subcommand("score", "score a corpus with a checkpoint");
    auto* bas = app.add_subcommand("bas", "block attention-anomaly scores of a corpus");
    auto* evl = app.add_subcommand("evaluate", "metrics for a scores CSV");
    auto* exp = app.add_subcommand("experiment", "setting x perturbation x scaler x model grid");
    for (auto* c : {gen, trn, sco, bas, evl, exp}) add_common(c, f);
    for (auto* c : {sco, bas}) c->add_option("--checkpoint", f.checkpoint, "checkpoint JSON")->check(CLI::ExistingFile);
    evl->add_option("--scores", f.scores, "scores CSV (default <out>/scores.csv)")->check(CLI::ExistingFile);
    evl->add_option("--threshold", f.threshold, "decision threshold gamma")->check(CLI::Range(0.0, 1.0));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const RunConfig cfg = resolve(f);
        if (gen->parsed()) return cmd_generate(cfg);
        if (trn->parsed()) return cmd_train(cfg);
        if (sco->parsed()) return cmd_score(cfg, f);
        if (bas->parsed()) return cmd_bas(cfg, f);
        if (evl->parsed()) return cmd_evaluate(cfg, f);
        if (exp->parsed()) return cmd_experiment(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
