#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gadtraj/tensor.hpp"

namespace gadtraj {

/// Adam with bias correction followed by decoupled weight decay p -= lr * wd * p.
class AdamW {
public:
    AdamW() = default;

    explicit AdamW(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step(double lr, double weight_decay) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto w = params_[k].mutable_data();
            auto g = params_[k].grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
                w[i] -= lr * weight_decay * w[i];
            }
        }
    }

    std::size_t steps() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::size_t t_ = 0;
};

/// Reduce-on-plateau: after `patience` consecutive epochs without a strict
/// improvement of the monitored loss, lr is multiplied by `factor` (never
/// below `floor`) and the streak restarts.
struct PlateauScheduler {
    double factor = 0.5;
    std::size_t patience = 1;
    double floor = 1e-8;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;

    double step(double lr, double loss) {
        if (loss < best) {
            best = loss;
            bad_epochs = 0;
            return lr;
        }
        if (++bad_epochs >= patience) {
            bad_epochs = 0;
            return std::max(lr * factor, std::min(lr, floor));
        }
        return lr;
    }
};

struct EarlyStopState {
    std::size_t counter = 0;
    bool stop = false;
};

/// Counter increments iff L_vld >= L_best (previous best), resets on strict
/// improvement; stop once the counter exceeds patience.
inline EarlyStopState early_stopping_update(double valid_loss, double best_loss, std::size_t counter,
                                            std::size_t patience) {
    counter = valid_loss < best_loss ? 0 : counter + 1;
    return {counter, counter > patience};
}

} // namespace gadtraj
