#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gadtraj/data.hpp"
#include "gadtraj/ops.hpp"
#include "gadtraj/tensor.hpp"

namespace gadtraj {

using NamedTensor = std::pair<std::string, Tensor>;

/// Per-call forward settings. Dropout draws from `rng` only when training.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = u(rng);
    return Tensor({fan_in, fan_out}, std::move(w), true);
}

inline Tensor zero_param(Shape s) { return Tensor::zeros(std::move(s), true); }
inline Tensor ones_param(Shape s) { return Tensor::full(std::move(s), 1.0, true); }

/// Aggregation block shared by every sequence encoder: masked mean pool,
/// tanh hidden layer, scalar logit, sigmoid.
struct OutputHeadParams {
    Tensor w1, b1, w2, b2;

    static OutputHeadParams init(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
        return {xavier_uniform(in, hidden, rng), zero_param({hidden}), zero_param({hidden, 1}), zero_param({1})};
    }

    void append_to(std::vector<NamedTensor>& out, const std::string& prefix) const {
        out.emplace_back(prefix + "w1", w1);
        out.emplace_back(prefix + "b1", b1);
        out.emplace_back(prefix + "w2", w2);
        out.emplace_back(prefix + "b2", b2);
    }
};

struct HeadOutput {
    Tensor z;     // [1x1] logit
    Tensor p_hat; // [1x1] sigmoid(z)
};

inline HeadOutput output_head(const Tensor& encoded, const OutputHeadParams& head, const std::vector<bool>& mask) {
    Tensor pooled = masked_mean_rows(encoded, mask);
    Tensor hidden = tanh(add_bias(matmul(pooled, head.w1), head.b1));
    Tensor z = add_bias(matmul(hidden, head.w2), head.b2);
    return {z, sigmoid(z)};
}

/// Fixed-target binary cross entropy: -(1/M) sum log(1 - p_hat), natural log,
/// p_hat clamped to 1 - 1e-12.
inline Tensor bce_loss(const Tensor& p_hat) { return mean(neg_log1m(p_hat, 1e-12)); }

/// Binary entropy in bits; 1 at p = 0.5, 0 at p in {0, 1}.
inline double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

} // namespace gadtraj
