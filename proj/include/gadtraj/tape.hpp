#pragma once

#include <cmath>
#include <functional>
#include <unordered_set>
#include <vector>

#include "gadtraj/ops.hpp"
#include "gadtraj/tensor.hpp"

namespace gadtraj {

/**
 * Topologically ordered record of the operations that produced a tensor.
 *
 * Operations register their inputs and a local backward rule when they run;
 * `Tape::record` walks that graph from the loss and lays the operations out
 * so every input precedes its consumer. `backward` then visits each recorded
 * operation once, in reverse.
 */
class Tape {
public:
    static Tape record(const Tensor& loss) {
        Tape tape;
        tape.root_ = loss.node();
        if (!loss.requires_grad()) return tape;

        // Iterative post-order DFS; parents are pushed in reverse so they are
        // visited in argument order, keeping the layout deterministic.
        std::unordered_set<const detail::Node*> seen;
        std::vector<std::pair<detail::Node*, bool>> stack{{loss.node().get(), false}};
        while (!stack.empty()) {
            auto [node, expanded] = stack.back();
            stack.pop_back();
            if (expanded) {
                tape.ops_.push_back(node);
                continue;
            }
            if (!seen.insert(node).second) continue;
            if (node->is_leaf()) continue;
            stack.emplace_back(node, true);
            for (auto it = node->parents.rbegin(); it != node->parents.rend(); ++it)
                if ((*it)->requires_grad && !seen.count(it->get())) stack.emplace_back(it->get(), false);
        }
        return tape;
    }

    std::size_t size() const { return ops_.size(); }

    /// Operation nodes in topological order (inputs first).
    const std::vector<detail::Node*>& operations() const { return ops_; }

    /// Accumulates dLoss/dLeaf into every reachable leaf that requires grad.
    void backward() const {
        if (!root_) return;
        if (root_->value.size() != 1)
            throw ContractError("backward requires a scalar loss, got shape " + shape_str(root_->shape));
        for (auto* op : ops_) {
            auto& g = op->ensure_grad();
            std::fill(g.begin(), g.end(), 0.0);
        }
        if (ops_.empty()) {
            // loss is itself a leaf
            if (root_->requires_grad) root_->ensure_grad()[0] += 1.0;
            return;
        }
        root_->ensure_grad()[0] = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)->backward(**it);
    }

private:
    std::shared_ptr<detail::Node> root_;
    std::vector<detail::Node*> ops_;
};

inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    Tape::record(loss).backward();
}

inline double grad_norm(const std::vector<Tensor>& params) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad()) sq += g * g;
    return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm measured before clipping.
inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw ContractError("clip_grad_norm: max_norm must be positive");
    const double norm = grad_norm(params);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params)
            for (double& g : p.mutable_grad()) g *= s;
    }
    return norm;
}

/**
 * Compares reverse-mode gradients of a scalar function against central
 * differences. Returns max |analytic - numeric| / max(1, |analytic|).
 */
inline double check_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
    Tensor leaf = x.detach_copy(true);
    backward(f(leaf));
    std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());

    NoGradGuard no_grad;
    double worst = 0.0;
    auto data = leaf.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double orig = data[i];
        data[i] = orig + h;
        const double fp = f(leaf).item();
        data[i] = orig - h;
        const double fm = f(leaf).item();
        data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
    return worst;
}

/// Same check over a set of parameters that `loss` reads implicitly.
inline double check_parameter_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                        double h = 1e-5) {
    for (auto& p : params) p.zero_grad();
    backward(loss());
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

    NoGradGuard no_grad;
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto data = params[k].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + h;
            const double fp = loss().item();
            data[i] = orig - h;
            const double fm = loss().item();
            data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
    }
    return worst;
}

} // namespace gadtraj
