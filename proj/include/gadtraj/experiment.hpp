#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gadtraj/checkpoint.hpp"
#include "gadtraj/config.hpp"
#include "gadtraj/gadformer.hpp"
#include "gadtraj/gru.hpp"
#include "gadtraj/manifest.hpp"
#include "gadtraj/metrics.hpp"
#include "gadtraj/syngen.hpp"
#include "gadtraj/training.hpp"

namespace gadtraj {

/// Streams derived from the run seed, one per stochastic stage.
namespace seed_stream {
inline constexpr std::uint64_t noise = 1, split = 2, novelty_valid = 3, novelty_test = 4, model = 5, train = 6;
}

/// The corpus named by the config: the CSV in `data`, or a generated one.
inline GroupDataset load_corpus(const RunConfig& cfg) {
    GroupDataset ds;
    if (cfg.data) {
        ds = load_tabular_csv(*cfg.data);
        if (cfg.pca_labels) ds = pca_zscore_label(std::move(ds));
    } else {
        GenConfig g = cfg.gen;
        g.seed = cfg.seed;
        ds = generate_dataset(g);
    }
    return ds;
}

struct PreparedData {
    SplitBundle bundle;        // scaled
    ScalerParams scaler;
    std::vector<std::size_t> noised;
    std::size_t novel_valid = 0, novel_test = 0;
};

/**
 * Noise over the whole corpus, stratified split, novelty on the evaluation
 * splits, then a scaler fit on train and applied to every split.
 */
inline PreparedData prepare_data(const GroupDataset& corpus, const RunConfig& cfg) {
    if (cfg.novelty > 0.0 && cfg.data)
        throw ConfigError("novelty injection needs the synthetic generator; it cannot be applied to a loaded corpus");
    PreparedData out;
    auto ds = inject_noise(corpus, cfg.noise, derive_seed(cfg.seed, seed_stream::noise), &out.noised);
    out.bundle = split_dataset(ds, cfg.train.ratios, cfg.train.normal_ratio, cfg.train.setting,
                               derive_seed(cfg.seed, seed_stream::split));
    if (cfg.novelty > 0.0) {
        std::vector<std::size_t> rv, rt;
        out.bundle.valid =
            inject_novelty(out.bundle.valid, cfg.novelty, derive_seed(cfg.seed, seed_stream::novelty_valid), cfg.gen, &rv);
        out.bundle.test =
            inject_novelty(out.bundle.test, cfg.novelty, derive_seed(cfg.seed, seed_stream::novelty_test), cfg.gen, &rt);
        out.novel_valid = rv.size();
        out.novel_test = rt.size();
    }
    if (out.bundle.train.empty()) throw ConfigError("train split is empty");
    out.scaler = fit_scaler(out.bundle.train, cfg.scaler);
    out.bundle.train = apply_scaler(std::move(out.bundle.train), out.scaler);
    out.bundle.valid = apply_scaler(std::move(out.bundle.valid), out.scaler);
    out.bundle.test = apply_scaler(std::move(out.bundle.test), out.scaler);
    return out;
}

/// Model config with input_dim taken from the data, and seq_len too when left at zero.
inline ModelConfig resolve_model_config(ModelConfig m, const GroupDataset& corpus) {
    if (m.seq_len == 0) m.seq_len = corpus.longest();
    m.input_dim = corpus.dim();
    if (corpus.longest() > m.seq_len)
        throw ConfigError("trajectories of length " + std::to_string(corpus.longest()) + " exceed seq_len " +
                          std::to_string(m.seq_len));
    return m;
}

/// Metrics of one scored split; null when the split lacks a class.
struct SplitMetrics {
    std::optional<double> roc, auprc;
    std::size_t positives = 0, negatives = 0;
};

inline ScoredSet to_scored_set(const ScoredSplit& s) {
    ScoredSet out;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (!s.labels[i]) continue;
        out.scores.push_back(s.scores[i]);
        out.labels.push_back(*s.labels[i]);
    }
    return out;
}

inline SplitMetrics split_metrics(const ScoredSplit& s) {
    SplitMetrics m;
    const auto set = to_scored_set(s);
    m.positives = set.positives();
    m.negatives = set.negatives();
    if (m.positives > 0 && m.negatives > 0) m.roc = auroc(set);
    if (m.positives > 0) m.auprc = auprc(set);
    return m;
}

/// CSV with columns split,group_id,label,score.
inline void write_scores_csv(std::ostream& out, const std::vector<std::pair<std::string, const ScoredSplit*>>& splits) {
    out << "split,group_id,label,score\n";
    for (const auto& [name, s] : splits)
        for (std::size_t i = 0; i < s->ids.size(); ++i) {
            out << name << ',' << s->ids[i] << ',';
            if (s->labels[i]) out << *s->labels[i];
            out << ',' << detail::format_double(s->scores[i]) << '\n';
        }
}

struct ScoreTable {
    std::vector<std::string> split, ids;
    std::vector<std::optional<int>> labels;
    std::vector<double> scores;
};

inline ScoreTable read_scores_csv(std::istream& in) {
    ScoreTable t;
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "split,group_id,label,score")
        throw ParseError("scores CSV must start with header split,group_id,label,score");
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        auto c = detail::split_csv_line(line);
        if (c.size() != 4) throw ParseError("scores CSV row " + std::to_string(row) + ": expected 4 cells");
        auto score = detail::parse_double(c[3]);
        if (!score) throw ParseError("scores CSV row " + std::to_string(row) + ": score is not a number");
        std::optional<int> label;
        if (!detail::trim(c[2]).empty()) {
            auto l = detail::parse_integer(c[2]);
            if (!l || (*l != 0 && *l != 1)) throw ParseError("scores CSV row " + std::to_string(row) + ": label must be 0 or 1");
            label = static_cast<int>(*l);
        }
        t.split.emplace_back(detail::trim(c[0]));
        t.ids.emplace_back(detail::trim(c[1]));
        t.labels.push_back(label);
        t.scores.push_back(*score);
    }
    return t;
}

/// Full report for one split of a score table at decision threshold gamma.
inline nlohmann::json evaluation_report(const ScoredSet& s, double gamma) {
    nlohmann::json j{{"n", s.labels.size()}, {"positives", s.positives()}, {"negatives", s.negatives()}};
    const auto c = confusion_at_threshold(s, gamma);
    const auto r = classification_rates(c);
    j["threshold"] = gamma;
    j["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
    j["rates"] = {{"tpr", r.tpr},
                  {"fpr", r.fpr},
                  {"fnr", r.fnr},
                  {"precision", r.precision},
                  {"recall", r.recall},
                  {"tpr_undefined", r.tpr_undefined},
                  {"fpr_undefined", r.fpr_undefined},
                  {"precision_undefined", r.precision_undefined}};
    auto curve = [](const std::vector<CurvePoint>& pts) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : pts) a.push_back({std::isinf(p.threshold) ? nlohmann::json(nullptr) : nlohmann::json(p.threshold), p.x, p.y});
        return a;
    };
    j["roc"] = nullptr;
    j["auprc"] = nullptr;
    if (s.positives() > 0 && s.negatives() > 0) {
        j["roc"] = auroc(s);
        j["roc_curve"] = curve(roc_curve(s));
    }
    if (s.positives() > 0) {
        j["auprc"] = auprc(s);
        j["pr_curve"] = curve(pr_curve(s));
    }
    return j;
}

/// Outcome of one train-and-score run.
struct RunOutcome {
    TrainResult result;
    ScalerParams scaler;
    ModelConfig model_config;
    SplitMetrics test, valid;
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> artifacts;
};

/**
 * Trains the configured model on `corpus` and writes into `dir`:
 * checkpoint.json (rewritten at every best-validation epoch), history.jsonl
 * and scores.csv.
 */
template <GroupModel Model>
RunOutcome run_model(const GroupDataset& corpus, const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto prep = prepare_data(corpus, cfg);
    RunOutcome out;
    out.scaler = prep.scaler;
    out.warnings = prep.bundle.warnings;
    out.model_config = resolve_model_config(cfg.model, corpus);

    Model model(out.model_config, derive_seed(cfg.seed, seed_stream::model));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, seed_stream::train);

    const auto ckpt_path = dir / "checkpoint.json";
    std::function<void(const Model&, std::size_t)> on_best = [&](const Model& m, std::size_t epoch) {
        save_checkpoint(make_checkpoint(m, out.scaler, {{"best_epoch", epoch}, {"config", to_json(cfg)}}), ckpt_path);
    };
    std::ostringstream history;
    out.result = train(model, prep.bundle, tc, on_best, &history);

    {
        std::ofstream f(dir / "history.jsonl", std::ios::binary);
        f << history.str();
    }
    {
        std::ofstream f(dir / "scores.csv", std::ios::binary);
        write_scores_csv(f, {{"train", &out.result.train}, {"valid", &out.result.valid}, {"test", &out.result.test}});
    }
    out.test = split_metrics(out.result.test);
    out.valid = split_metrics(out.result.valid);
    out.artifacts = {ckpt_path, dir / "history.jsonl", dir / "scores.csv"};
    return out;
}

inline RunOutcome run_configured_model(const GroupDataset& corpus, const RunConfig& cfg, const std::filesystem::path& dir) {
    return cfg.model_kind == ModelKind::gadformer ? run_model<GadFormer>(corpus, cfg, dir)
                                                  : run_model<GruBaseline>(corpus, cfg, dir);
}

// ---------------------------------------------------------------------------
// Experiment grid

struct GridCell {
    LearningSetting setting;
    std::string exp;      // e.g. "noise .2"
    double noise = 0.0;
    double novelty = 0.0;
    ScalerKind scaler;
    ModelKind model;

    std::string dirname() const {
        std::string e = exp;
        for (auto& ch : e)
            if (ch == ' ' || ch == '.') ch = '_';
        return to_string(setting) + "_" + e + "_" + to_string(scaler) + "_" + to_string(model);
    }
};

struct Perturbation {
    std::string name;
    double noise, novelty;
};

/// Noise levels .0/.2/.5 and novelty levels .01/.05; novelty needs a generated corpus.
inline std::vector<Perturbation> default_perturbations(bool synthetic) {
    std::vector<Perturbation> p{{"noise .0", 0.0, 0.0}, {"noise .2", 0.2, 0.0}, {"noise .5", 0.5, 0.0}};
    if (synthetic) {
        p.push_back({"novelty .01", 0.0, 0.01});
        p.push_back({"novelty .05", 0.0, 0.05});
    }
    return p;
}

inline std::vector<GridCell> experiment_grid(bool synthetic) {
    std::vector<GridCell> cells;
    for (auto setting : {LearningSetting::unsupervised, LearningSetting::semi_supervised})
        for (const auto& p : default_perturbations(synthetic))
            for (auto scaler : {ScalerKind::standard, ScalerKind::robust})
                for (auto model : {ModelKind::gadformer, ModelKind::gru})
                    cells.push_back({setting, p.name, p.noise, p.novelty, scaler, model});
    return cells;
}

struct CellResult {
    GridCell cell;
    SplitMetrics test;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> artifacts;
};

inline std::string model_label(ModelKind k) { return k == ModelKind::gadformer ? "GADFormer" : "GRU"; }

inline nlohmann::json to_json(const CellResult& r, const std::string& dataset) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"setting", r.cell.setting == LearningSetting::unsupervised ? "U" : "E"},
            {"dataset", dataset},
            {"exp", r.cell.exp},
            {"model", model_label(r.cell.model)},
            {"scaler", to_string(r.cell.scaler)},
            {"roc", opt(r.test.roc)},
            {"auprc", opt(r.test.auprc)},
            {"test_positives", r.test.positives},
            {"test_negatives", r.test.negatives},
            {"best_epoch", r.best_epoch},
            {"epochs_run", r.epochs_run},
            {"cell", r.cell.dirname()}};
}

/// Worker count for grid cells: GADTRAJ_THREADS when set, else 1.
inline std::size_t grid_threads() {
    if (const char* v = std::getenv("GADTRAJ_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
        throw ConfigError(std::string("GADTRAJ_THREADS must be a positive integer, got '") + v + "'");
    }
    return 1;
}

/// Markdown table in the layout of the published result tables.
inline std::string summary_table(const nlohmann::json& rows) {
    std::ostringstream os;
    os << "| setting | dataset | exp | model | scaler | roc | auprc |\n|---|---|---|---|---|---|---|\n";
    auto num = [](const nlohmann::json& v) {
        if (v.is_null()) return std::string("n/a");
        std::ostringstream s;
        s << std::fixed << std::setprecision(3) << v.get<double>();
        return s.str();
    };
    for (const auto& r : rows)
        os << "| " << r["setting"].get<std::string>() << " | " << r["dataset"].get<std::string>() << " | "
           << r["exp"].get<std::string>() << " | " << r["model"].get<std::string>() << " | "
           << r["scaler"].get<std::string>() << " | " << num(r["roc"]) << " | " << num(r["auprc"]) << " |\n";
    return os.str();
}

struct ExperimentOutcome {
    std::vector<CellResult> cells;
    nlohmann::json summary;
    std::vector<std::filesystem::path> artifacts;
};

/**
 * Runs every grid cell on the same corpus, each in its own subdirectory of
 * `root`/cells, on up to `threads` workers. Results are collected by cell
 * index, so the summary does not depend on scheduling. Writes summary.json
 * and summary.md into `root`.
 */
inline ExperimentOutcome run_experiment(const RunConfig& base, const std::filesystem::path& root,
                                        std::vector<GridCell> cells, std::size_t threads = 1,
                                        std::ostream* progress = nullptr) {
    const auto corpus = load_corpus(base);
    const std::string dataset = base.data ? std::filesystem::path(*base.data).stem().string() : base.preset;
    ExperimentOutcome out;
    out.cells.resize(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;

    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                RunConfig cfg = base;
                cfg.train.setting = cells[i].setting;
                cfg.noise = cells[i].noise;
                cfg.novelty = cells[i].novelty;
                cfg.scaler = cells[i].scaler;
                cfg.model_kind = cells[i].model;
                auto run = run_configured_model(corpus, cfg, root / "cells" / cells[i].dirname());
                CellResult r{cells[i], run.test, run.result.best_epoch, run.result.history.size(), run.warnings,
                             run.artifacts};
                std::lock_guard lock(mu);
                out.cells[i] = std::move(r);
                if (progress)
                    *progress << "[" << i + 1 << "/" << cells.size() << "] " << cells[i].dirname() << " roc="
                              << (run.test.roc ? std::to_string(*run.test.roc) : "n/a") << std::endl;
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = cells.size();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, cells.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : out.cells) {
        rows.push_back(to_json(c, dataset));
        out.artifacts.insert(out.artifacts.end(), c.artifacts.begin(), c.artifacts.end());
    }
    out.summary = {{"dataset", dataset}, {"seed", base.seed}, {"rows", rows}};
    std::filesystem::create_directories(root);
    {
        std::ofstream f(root / "summary.json", std::ios::binary);
        f << out.summary.dump(2) << '\n';
    }
    {
        std::ofstream f(root / "summary.md", std::ios::binary);
        f << summary_table(rows);
    }
    out.artifacts.push_back(root / "summary.json");
    out.artifacts.push_back(root / "summary.md");
    return out;
}

} // namespace gadtraj
