#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gadtraj/data.hpp"
#include "gadtraj/gadformer.hpp"
#include "gadtraj/optim.hpp"
#include "gadtraj/random.hpp"
#include "gadtraj/tape.hpp"

namespace gadtraj {

template <class M>
concept GroupModel = requires(const M& m, const PaddedGroup& g, const ForwardContext& ctx) {
    { m.forward(g, ctx) } -> std::same_as<ModelOutput>;
    { m.parameters() } -> std::same_as<std::vector<Tensor>>;
    { m.named_parameters() } -> std::same_as<std::vector<NamedTensor>>;
    { m.config() } -> std::convertible_to<const ModelConfig&>;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    SplitRatios ratios;
    double normal_ratio = 0.9;
    double lr = 1e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::size_t epochs = 100;
    std::size_t batch_size = 25;
    std::size_t patience = 10;
    double clip_max_norm = 1.0;
    double sched_factor = 0.5;
    double lr_floor = 1e-8;
    std::uint64_t seed = 0;
    LearningSetting setting = LearningSetting::unsupervised;

    std::size_t sched_patience() const { return std::max<std::size_t>(1, (patience + 1) / 2); }

    void validate() const {
        if (!(lr > 0.0)) throw ContractError("TrainConfig: learning rate must be positive");
        if (epochs < 1) throw ContractError("TrainConfig: epochs must be at least 1");
        if (batch_size < 1) throw ContractError("TrainConfig: batch size must be at least 1");
        if (weight_decay < 0.0) throw ContractError("TrainConfig: weight decay must be non-negative");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double lr = 0.0;       // rate used during the epoch
    double next_lr = 0.0;  // after the scheduler step
    std::size_t earlystop = 0;
    bool improved = false;
};

inline nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},         {"L_trn", r.train_loss},   {"L_vld", r.valid_loss},
            {"lr", r.lr},               {"next_lr", r.next_lr},    {"earlystop", r.earlystop},
            {"improved", r.improved}};
}

struct EpochLosses {
    double train = 0.0;
    double valid = 0.0;
};

struct LoopOutcome {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    double final_lr = 0.0;
};

/**
 * Epoch loop of the training algorithm, independent of any model.
 *
 * `run_epoch(epoch, lr)` performs the training and validation passes and
 * returns their losses; `on_best(epoch)` runs whenever the validation loss
 * strictly improves. The loop continues while epoch < epochs and the
 * early-stop counter has not exceeded patience.
 */
template <class RunEpoch, class OnBest>
LoopOutcome run_epoch_loop(const TrainConfig& cfg, RunEpoch&& run_epoch, OnBest&& on_best) {
    LoopOutcome out;
    PlateauScheduler sched{cfg.sched_factor, cfg.sched_patience(), cfg.lr_floor};
    double lr = cfg.lr;
    std::size_t earlystop = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs && earlystop <= cfg.patience; ++epoch) {
        const EpochLosses losses = run_epoch(epoch, lr);
        EpochRecord rec{epoch, losses.train, losses.valid, lr, lr, 0, false};
        const double previous_best = out.best_loss;
        if (losses.valid < out.best_loss) {
            out.best_loss = losses.valid;
            out.best_epoch = epoch;
            rec.improved = true;
            on_best(epoch);
        }
        lr = sched.step(lr, losses.valid);
        earlystop = early_stopping_update(losses.valid, previous_best, earlystop, cfg.patience).counter;
        rec.next_lr = lr;
        rec.earlystop = earlystop;
        out.history.push_back(rec);
    }
    out.final_lr = lr;
    return out;
}

struct ScoredSplit {
    std::vector<std::string> ids;
    std::vector<double> scores;
    std::vector<std::optional<int>> labels;
    double loss = 0.0;
};

struct TrainResult {
    ScoredSplit train, valid, test;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

inline std::vector<std::vector<double>> snapshot_parameters(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    for (const auto& p : params) out.emplace_back(p.data().begin(), p.data().end());
    return out;
}

inline void restore_parameters(std::vector<Tensor> params, const std::vector<std::vector<double>>& snap) {
    if (params.size() != snap.size()) throw ContractError("parameter snapshot does not match model");
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto d = params[k].mutable_data();
        if (d.size() != snap[k].size()) throw ContractError("parameter snapshot does not match model");
        std::copy(snap[k].begin(), snap[k].end(), d.begin());
    }
}

/// Eval-mode probabilities and fixed-target loss for a list of groups.
template <GroupModel Model>
ScoredSplit score_groups(const Model& model, const std::vector<PaddedGroup>& groups) {
    NoGradGuard no_grad;
    ScoredSplit s;
    for (const auto& g : groups) {
        s.ids.push_back(g.id);
        s.labels.push_back(g.label);
        s.scores.push_back(model.forward(g, ForwardContext{}).probability());
    }
    if (!groups.empty()) s.loss = bce_loss(Tensor({s.scores.size()}, s.scores)).item();
    return s;
}

/**
 * Trains with the fixed auxiliary target p = 0 for every training group.
 *
 * Batches are reshuffled each epoch from a seed derived from (cfg.seed,
 * epoch). The validation split is scored in eval mode after every epoch;
 * parameters of the best epoch are restored at the end and alone score the
 * test split. `on_best` is invoked with the model holding the new best
 * parameters.
 */
template <GroupModel Model>
TrainResult train(Model& model, const SplitBundle& bundle, const TrainConfig& cfg,
                  const std::function<void(const Model&, std::size_t)>& on_best = {},
                  std::ostream* log = nullptr) {
    cfg.validate();
    if (bundle.train.empty() || bundle.valid.empty())
        throw ContractError("training needs non-empty train and valid splits");
    if (cfg.setting == LearningSetting::semi_supervised && bundle.train.anomaly_count() > 0)
        throw ContractError("semi-supervised training split holds " + std::to_string(bundle.train.anomaly_count()) +
                            " labeled anomalies");
    const std::size_t seq_len = model.config().seq_len;
    const auto train_groups = pad_dataset(bundle.train, seq_len);
    const auto valid_groups = pad_dataset(bundle.valid, seq_len);
    const auto test_groups = pad_dataset(bundle.test, seq_len);

    auto params = model.parameters();
    AdamW opt(params, cfg.beta1, cfg.beta2);
    std::vector<std::vector<double>> best_params;
    ScoredSplit epoch_train, epoch_valid, best_train, best_valid;

    auto run_epoch = [&](std::size_t epoch, double lr) -> EpochLosses {
        std::vector<std::size_t> order(train_groups.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = make_rng(cfg.seed, 0xe90c0000ULL + epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        auto dropout_rng = make_rng(cfg.seed, 0xd409000000ULL + epoch);
        ForwardContext ctx{true, &dropout_rng};

        epoch_train = ScoredSplit{};
        epoch_train.scores.assign(train_groups.size(), 0.0);
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Tensor> probs;
            for (std::size_t k = start; k < end; ++k) probs.push_back(model.forward(train_groups[order[k]], ctx).p_hat);
            Tensor loss = bce_loss(concat_rows(probs));
            if (!std::isfinite(loss.item()))
                throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index));
            opt.zero_grad();
            backward(loss);
            clip_grad_norm(params, cfg.clip_max_norm);
            opt.step(lr, cfg.weight_decay);
            loss_sum += loss.item() * static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) epoch_train.scores[order[k]] = probs[k - start].item();
        }
        for (const auto& g : train_groups) {
            epoch_train.ids.push_back(g.id);
            epoch_train.labels.push_back(g.label);
        }
        epoch_train.loss = loss_sum / static_cast<double>(train_groups.size());

        epoch_valid = score_groups(model, valid_groups);
        if (!std::isfinite(epoch_valid.loss))
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        return {epoch_train.loss, epoch_valid.loss};
    };

    auto remember_best = [&](std::size_t epoch) {
        best_params = snapshot_parameters(params);
        best_train = epoch_train;
        best_valid = epoch_valid;
        if (on_best) on_best(model, epoch);
    };

    auto outcome = run_epoch_loop(cfg, run_epoch, remember_best);
    if (log)
        for (const auto& r : outcome.history) *log << to_json(r).dump() << '\n';

    restore_parameters(params, best_params);
    TrainResult result;
    result.train = std::move(best_train);
    result.valid = std::move(best_valid);
    result.test = score_groups(model, test_groups);
    result.history = std::move(outcome.history);
    result.best_epoch = outcome.best_epoch;
    return result;
}

} // namespace gadtraj
