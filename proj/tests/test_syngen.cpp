#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gadtraj/metrics.hpp"
#include "gadtraj/syngen.hpp"

using namespace gadtraj;

namespace {

using Vec = std::vector<double>;

double dist2(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

Vec flatten(const Trajectory& t) {
    Vec v;
    for (const auto& p : t.points) v.insert(v.end(), p.attributes.begin(), p.attributes.end());
    return v;
}

// Lloyd's k-means with k-means++ seeding; best of several restarts by inertia.
std::vector<Vec> kmeans(const std::vector<Vec>& x, std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vec> best;
    double best_inertia = INFINITY;
    for (int restart = 0; restart < 10; ++restart) {
        std::vector<Vec> c{x[std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng)]};
        while (c.size() < k) {
            Vec w(x.size());
            for (std::size_t m = 0; m < x.size(); ++m) {
                w[m] = INFINITY;
                for (const auto& cc : c) w[m] = std::min(w[m], dist2(x[m], cc));
            }
            c.push_back(x[std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng)]);
        }
        double inertia = 0;
        for (int it = 0; it < 100; ++it) {
            std::vector<Vec> s(k, Vec(x[0].size(), 0.0));
            std::vector<std::size_t> n(k, 0);
            inertia = 0;
            for (const auto& p : x) {
                std::size_t a = 0;
                double bd = INFINITY;
                for (std::size_t j = 0; j < k; ++j)
                    if (double d = dist2(p, c[j]); d < bd) bd = d, a = j;
                inertia += bd;
                ++n[a];
                for (std::size_t i = 0; i < p.size(); ++i) s[a][i] += p[i];
            }
            for (std::size_t j = 0; j < k; ++j)
                if (n[j])
                    for (std::size_t i = 0; i < s[j].size(); ++i) c[j][i] = s[j][i] / double(n[j]);
        }
        if (inertia < best_inertia) best_inertia = inertia, best = c;
    }
    return best;
}

// Nearest-centroid detector on raw coordinates: centroids of the normal
// paths (one per heading family), score = distance to the closest one.
double nearest_centroid_auroc(const GroupDataset& ds, std::size_t families, const std::vector<int>& labels) {
    std::vector<Vec> x, normals;
    for (std::size_t m = 0; m < ds.size(); ++m) {
        x.push_back(flatten(ds.trajectories[m]));
        if (labels[m] == 0) normals.push_back(x.back());
    }
    auto c = kmeans(normals, families, 1);
    ScoredSet s;
    for (std::size_t m = 0; m < x.size(); ++m) {
        double d = INFINITY;
        for (const auto& cc : c) d = std::min(d, dist2(x[m], cc));
        s.scores.push_back(std::sqrt(d));
        s.labels.push_back(labels[m]);
    }
    return auroc(s);
}

std::vector<int> labels_of(const GroupDataset& ds) {
    std::vector<int> l;
    for (const auto& t : ds.trajectories) l.push_back(*t.label);
    return l;
}

GenConfig small(std::size_t m, std::size_t t, std::uint64_t seed = 0) {
    GenConfig g;
    g.num_trajectories = m;
    g.length = t;
    g.seed = seed;
    return g;
}

std::string csv_of(const GroupDataset& ds) {
    std::ostringstream out;
    write_tabular_csv(out, ds);
    return out.str();
}

} // namespace

TEST(Generate, AnomalyFreeMinimalCorpus) {
    auto g = small(2, 2);
    g.anomaly_fraction = 0.0;
    auto ds = generate_dataset(g);
    ASSERT_EQ(ds.size(), 2u);
    for (const auto& t : ds.trajectories) {
        EXPECT_EQ(t.label, 0);
        EXPECT_EQ(t.length(), 2u);
    }
}

TEST(Generate, AnomalyCountIsRoundedFraction) {
    auto ds = generate_dataset(small(1000, 24));
    EXPECT_EQ(ds.anomaly_count(), 50u);
    EXPECT_EQ(ds.size() - ds.anomaly_count(), 950u);
    for (auto [m, f] : std::vector<std::pair<std::size_t, double>>{{37, 0.1}, {10, 0.25}, {3400, 0.05}, {7, 0.5}}) {
        auto g = small(m, 4);
        g.anomaly_fraction = f;
        auto d = generate_dataset(g);
        EXPECT_EQ(d.anomaly_count(), std::size_t(std::llround(double(m) * f))) << m << " " << f;
        for (const auto& t : d.trajectories) EXPECT_TRUE(*t.label == 0 || *t.label == 1);
    }
}

TEST(Generate, SameSeedSameCsv) {
    EXPECT_EQ(csv_of(generate_dataset(small(200, 30, 5))), csv_of(generate_dataset(small(200, 30, 5))));
    EXPECT_NE(csv_of(generate_dataset(small(200, 30, 5))), csv_of(generate_dataset(small(200, 30, 6))));
}

TEST(Generate, MechanismsCycleOverAnomalies) {
    auto kinds = assign_anomalies(small(600, 10));
    std::size_t count[3] = {0, 0, 0};
    for (const auto& k : kinds)
        if (k) ++count[static_cast<int>(*k)];
    EXPECT_EQ(count[0] + count[1] + count[2], 30u);
    EXPECT_EQ(count[0], 10u);
    EXPECT_EQ(count[1], 10u);
    EXPECT_EQ(count[2], 10u);
}

TEST(Generate, NormalPathsReachTabularMagnitudes) {
    auto ds = generate_dataset(small(300, 72));
    double max_coord = 0;
    for (const auto& t : ds.trajectories) {
        if (t.is_anomaly()) continue;
        const auto& first = t.points.front().attributes;
        EXPECT_LT(std::hypot(first[0], first[1]), 15.0);
        for (double v : t.points.back().attributes) max_coord = std::max(max_coord, std::abs(v));
        for (const auto& p : t.points)
            for (double v : p.attributes) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_GT(max_coord, 90.0);
    EXPECT_LT(max_coord, 200.0);
}

TEST(Generate, InvalidConfigRejected) {
    auto g = small(1, 10);
    EXPECT_THROW(generate_dataset(g), ContractError);
    g = small(10, 1);
    EXPECT_THROW(generate_dataset(g), ContractError);
    g = small(10, 10);
    g.anomaly_fraction = 1.5;
    EXPECT_THROW(generate_dataset(g), ContractError);
}

TEST(Generate, CsvRoundTripEqualsDataset) {
    auto ds = generate_dataset(small(150, 20, 3));
    std::istringstream in(csv_of(ds));
    auto back = parse_tabular_csv(in);
    EXPECT_EQ(back.trajectories, ds.trajectories);
}

TEST(Generate, NearestCentroidOracleSeparatesAnomalies) {
    for (std::uint64_t seed : {0u, 7u}) {
        auto ds = generate_dataset(small(800, 24, seed));
        EXPECT_GT(nearest_centroid_auroc(ds, 3, labels_of(ds)), 0.9) << "seed " << seed;
    }
    auto full = generate_dataset(small(3400, 72, 1));
    EXPECT_GT(nearest_centroid_auroc(full, 3, labels_of(full)), 0.9);
}

TEST(Generate, RandomLabelsGiveChanceAuroc) {
    auto g = small(800, 24, 2);
    g.anomaly_fraction = 0.0;
    auto ds = generate_dataset(g);
    double total = 0;
    const int reps = 10;
    for (int r = 0; r < reps; ++r) {
        std::mt19937_64 rng(100 + r);
        std::bernoulli_distribution coin(0.1);
        std::vector<int> labels;
        for (std::size_t m = 0; m < ds.size(); ++m) labels.push_back(coin(rng) ? 1 : 0);
        total += nearest_centroid_auroc(ds, 3, labels);
    }
    EXPECT_NEAR(total / reps, 0.5, 0.05);
}

TEST(Noise, ZeroRatioLeavesDataUnchanged) {
    auto ds = generate_dataset(small(100, 12));
    EXPECT_EQ(inject_noise(ds, 0.0, 1), ds);
}

TEST(Noise, FullRatioPerturbsEveryTrajectory) {
    auto ds = generate_dataset(small(100, 12));
    std::vector<std::size_t> idx;
    auto noisy = inject_noise(ds, 1.0, 1, &idx);
    EXPECT_EQ(idx.size(), 100u);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_NE(noisy.trajectories[i].points, ds.trajectories[i].points);
        EXPECT_EQ(noisy.trajectories[i].label, ds.trajectories[i].label);
    }
}

TEST(Noise, PerturbedCountIsRounded) {
    auto ds = generate_dataset(small(333, 12));
    for (double r : {0.2, 0.5, 0.01}) {
        std::vector<std::size_t> idx;
        auto noisy = inject_noise(ds, r, 4, &idx);
        const auto want = std::size_t(std::llround(333 * r));
        EXPECT_EQ(idx.size(), want);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) changed += noisy.trajectories[i].points != ds.trajectories[i].points;
        EXPECT_EQ(changed, want);
    }
}

TEST(Noise, OffsetsScaleWithRatioAndFeatureStd) {
    auto ds = generate_dataset(small(400, 30));
    const auto sd = feature_std(ds);
    auto noisy = inject_noise(ds, 0.5, 8);
    double s2[2] = {0, 0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (noisy.trajectories[i].points == ds.trajectories[i].points) continue;
        for (std::size_t k = 0; k < ds.trajectories[i].length(); ++k, ++n)
            for (std::size_t f = 0; f < 2; ++f) {
                const double d = noisy.trajectories[i].points[k].attributes[f] - ds.trajectories[i].points[k].attributes[f];
                s2[f] += d * d;
            }
    }
    for (std::size_t f = 0; f < 2; ++f) EXPECT_NEAR(std::sqrt(s2[f] / double(n)), 0.5 * sd[f], 0.05 * 0.5 * sd[f]);
}

TEST(Novelty, ZeroRatioUnchanged) {
    auto ds = generate_dataset(small(100, 12));
    EXPECT_EQ(inject_novelty(ds, 0.0, 1, GenConfig{}), ds);
}

TEST(Novelty, ReplacesRoundedShareOfNormalsKeepingLabelZero) {
    auto g = small(500, 16);
    auto ds = generate_dataset(g);
    const std::size_t normals = ds.size() - ds.anomaly_count();
    for (double r : {0.01, 0.05, 0.3}) {
        std::vector<std::size_t> idx;
        auto nov = inject_novelty(ds, r, 9, g, &idx);
        EXPECT_EQ(idx.size(), std::size_t(std::llround(double(normals) * r)));
        for (auto i : idx) {
            EXPECT_EQ(nov.trajectories[i].label, 0);
            EXPECT_FALSE(ds.trajectories[i].is_anomaly());
            EXPECT_EQ(nov.trajectories[i].length(), ds.trajectories[i].length());
            EXPECT_EQ(nov.trajectories[i].id, ds.trajectories[i].id);
            EXPECT_NE(nov.trajectories[i].points, ds.trajectories[i].points);
        }
        EXPECT_EQ(nov.anomaly_count(), ds.anomaly_count());
    }
}

TEST(Novelty, NovelPathsLeaveTheKnownHeadingFamilies) {
    auto g = small(300, 24);
    auto ds = generate_dataset(g);
    std::vector<std::size_t> idx;
    auto nov = inject_novelty(ds, 0.1, 3, g, &idx);
    ASSERT_FALSE(idx.empty());
    for (auto i : idx) {
        const auto& a = nov.trajectories[i].points.front().attributes;
        const auto& b = nov.trajectories[i].points.back().attributes;
        const double deg = std::atan2(b[1] - a[1], b[0] - a[0]) * 180.0 / M_PI;
        // known family spans roughly 30..85 degrees
        EXPECT_TRUE(deg > 100.0 || deg < 0.0) << deg;
    }
}
