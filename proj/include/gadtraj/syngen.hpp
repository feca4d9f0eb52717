#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "gadtraj/data.hpp"
#include "gadtraj/random.hpp"

namespace gadtraj {

/// Parameters of the synthetic 2-D trajectory corpus.
struct GenConfig {
    std::size_t num_trajectories = 3400;
    std::size_t length = 72;
    double anomaly_fraction = 0.05;
    double noise_ratio = 0.0;
    double novelty_ratio = 0.0;
    std::uint64_t seed = 0;

    // spatial scale: with 72 steps of 2.5 units the paths end near (100, 150)
    double step_length = 2.5;
    double start_spread = 2.0;
    double jitter = 0.5;
    double curvature = 0.005;          // max |heading change| per step, radians
    double heading_spread_deg = 2.0;
    std::vector<double> headings_deg{35.0, 56.0, 77.0};
    std::vector<double> novel_headings_deg{125.0, 200.0, 290.0};
    double dispersion_walk = 0.25;     // heading random-walk sigma of dispersed paths, radians
    double teleport_min_steps = 10.0;  // teleport offset range, in step lengths
    double teleport_max_steps = 20.0;

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (num_trajectories < 2) throw ContractError("GenConfig: need at least 2 trajectories");
        if (length < 2) throw ContractError("GenConfig: trajectory length must be at least 2");
        if (!in01(anomaly_fraction) || !in01(noise_ratio) || !in01(novelty_ratio))
            throw ContractError("GenConfig: fractions must lie in [0, 1]");
        if (headings_deg.empty() || novel_headings_deg.empty())
            throw ContractError("GenConfig: heading sets must be non-empty");
    }
};

enum class AnomalyKind { reversal, dispersion, teleport };

namespace detail {

constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// A smooth path: fixed heading family, constant slow turn, small jitter.
// `reverse_at` flips the heading from that step on; `jitter_scale` widens the
// noise and `heading_walk` lets the heading drift as a random walk (radians per step).
inline std::vector<TrajectoryPoint> smooth_path(const GenConfig& cfg, const std::vector<double>& headings,
                                                std::mt19937_64& rng, std::size_t reverse_at = SIZE_MAX,
                                                double jitter_scale = 1.0, double heading_walk = 0.0) {
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, headings.size() - 1);
    std::uniform_real_distribution<double> turn(-cfg.curvature, cfg.curvature);
    std::uniform_real_distribution<double> speed_mul(0.9, 1.1);

    double x = cfg.start_spread * unit(rng);
    double y = cfg.start_spread * unit(rng);
    double theta = deg2rad(headings[pick(rng)] + cfg.heading_spread_deg * unit(rng));
    const double omega = turn(rng);
    const double speed = cfg.step_length * speed_mul(rng);
    const double sigma = cfg.jitter * jitter_scale;

    std::vector<TrajectoryPoint> pts;
    pts.reserve(cfg.length);
    pts.push_back({{x, y}});
    for (std::size_t t = 1; t < cfg.length; ++t) {
        if (t == reverse_at) theta += std::numbers::pi;
        x += speed * std::cos(theta) + sigma * unit(rng);
        y += speed * std::sin(theta) + sigma * unit(rng);
        theta += omega + heading_walk * unit(rng);
        pts.push_back({{x, y}});
    }
    return pts;
}

} // namespace detail

inline std::vector<TrajectoryPoint> generate_normal_path(const GenConfig& cfg, std::mt19937_64& rng,
                                                         bool novel = false) {
    return detail::smooth_path(cfg, novel ? cfg.novel_headings_deg : cfg.headings_deg, rng);
}

inline std::vector<TrajectoryPoint> generate_anomalous_path(const GenConfig& cfg, AnomalyKind kind,
                                                            std::mt19937_64& rng) {
    const std::size_t T = cfg.length;
    switch (kind) {
    case AnomalyKind::reversal: {
        std::uniform_int_distribution<std::size_t> at(std::max<std::size_t>(1, T / 3), std::max<std::size_t>(1, 2 * T / 3));
        const std::size_t k = at(rng);
        return detail::smooth_path(cfg, cfg.headings_deg, rng, k);
    }
    case AnomalyKind::dispersion:
        return detail::smooth_path(cfg, cfg.headings_deg, rng, SIZE_MAX, 5.0, cfg.dispersion_walk);
    case AnomalyKind::teleport: {
        // the path jumps once and carries on from the displaced position
        auto pts = detail::smooth_path(cfg, cfg.headings_deg, rng);
        std::uniform_int_distribution<std::size_t> start(std::max<std::size_t>(1, T / 4), std::max<std::size_t>(1, 3 * T / 4));
        std::uniform_real_distribution<double> mag(cfg.teleport_min_steps * cfg.step_length,
                                                   cfg.teleport_max_steps * cfg.step_length);
        std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
        const std::size_t s = start(rng);
        const double m = mag(rng), a = ang(rng);
        for (std::size_t i = s; i < T; ++i) {
            pts[i].attributes[0] += m * std::cos(a);
            pts[i].attributes[1] += m * std::sin(a);
        }
        return pts;
    }
    }
    return {};
}

/// Mechanism of every trajectory index, or nullopt for normal ones.
inline std::vector<std::optional<AnomalyKind>> assign_anomalies(const GenConfig& cfg) {
    cfg.validate();
    const std::size_t M = cfg.num_trajectories;
    const auto n_anom = static_cast<std::size_t>(std::llround(static_cast<double>(M) * cfg.anomaly_fraction));
    std::vector<std::size_t> order(M);
    for (std::size_t i = 0; i < M; ++i) order[i] = i;
    auto rng = make_rng(cfg.seed, 0xa11u);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_anom));
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::optional<AnomalyKind>> kind(M);
    for (std::size_t k = 0; k < chosen.size(); ++k) kind[chosen[k]] = static_cast<AnomalyKind>(k % 3);
    return kind;
}

/**
 * Labeled corpus of `num_trajectories` paths, exactly round(M * anomaly_fraction)
 * of them anomalous. Anomalous indices are drawn with the base seed; each
 * trajectory then uses its own derived stream, so output does not depend on
 * generation order. Anomaly mechanisms cycle reversal, dispersion, teleport.
 */
inline GroupDataset generate_dataset(const GenConfig& cfg) {
    const auto kind = assign_anomalies(cfg);
    const std::size_t M = cfg.num_trajectories;
    GroupDataset ds;
    ds.trajectories.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        auto trng = make_rng(cfg.seed, 1000 + m);
        auto& t = ds.trajectories[m];
        t.id = std::to_string(m + 1);
        if (!kind[m]) {
            t.points = generate_normal_path(cfg, trng);
            t.label = 0;
        } else {
            t.points = generate_anomalous_path(cfg, *kind[m], trng);
            t.label = 1;
        }
    }
    ds.max_len = cfg.length;
    return ds;
}

/// Population standard deviation of each feature over all points.
inline std::vector<double> feature_std(const GroupDataset& ds) {
    return fit_scaler(ds, ScalerKind::standard).scale;
}

/**
 * Perturbs round(M * noise_ratio) uniformly chosen trajectories: every point
 * gets zero-mean Gaussian offsets with per-feature sigma = noise_ratio * std.
 * Labels are untouched.
 */
inline GroupDataset inject_noise(GroupDataset ds, double noise_ratio, std::uint64_t seed,
                                 std::vector<std::size_t>* perturbed = nullptr) {
    if (noise_ratio < 0.0 || noise_ratio > 1.0) throw ContractError("noise_ratio must lie in [0, 1]");
    if (noise_ratio == 0.0 || ds.empty()) return ds;
    const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * noise_ratio));
    const auto sd = feature_std(ds);
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto rng = make_rng(seed, 0x401e5u);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto i : idx) {
        auto trng = make_rng(seed, 0x10000000ULL + i);
        for (auto& p : ds.trajectories[i].points)
            for (std::size_t f = 0; f < p.attributes.size(); ++f) p.attributes[f] += noise_ratio * sd[f] * unit(trng);
    }
    if (perturbed) *perturbed = idx;
    return ds;
}

/**
 * Replaces round(normal_count * novelty_ratio) normal trajectories by paths
 * from the unseen heading family. Replaced trajectories keep id, length and
 * label 0. Meant for evaluation splits only.
 */
inline GroupDataset inject_novelty(GroupDataset ds, double novelty_ratio, std::uint64_t seed, const GenConfig& gen,
                                   std::vector<std::size_t>* replaced = nullptr) {
    if (novelty_ratio < 0.0 || novelty_ratio > 1.0) throw ContractError("novelty_ratio must lie in [0, 1]");
    if (novelty_ratio == 0.0) return ds;
    std::vector<std::size_t> normals;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.trajectories[i].label.has_value() && *ds.trajectories[i].label == 0) normals.push_back(i);
    const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(normals.size()) * novelty_ratio));
    auto rng = make_rng(seed, 0x70e1u);
    std::shuffle(normals.begin(), normals.end(), rng);
    normals.resize(count);
    std::sort(normals.begin(), normals.end());
    for (auto i : normals) {
        auto& t = ds.trajectories[i];
        GenConfig g = gen;
        g.length = std::max<std::size_t>(2, t.points.size());
        auto trng = make_rng(seed, 0x20000000ULL + i);
        auto pts = generate_normal_path(g, trng, true);
        pts.resize(t.points.size());
        t.points = std::move(pts);
        t.label = 0;
    }
    if (replaced) *replaced = normals;
    return ds;
}

} // namespace gadtraj
