#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gadtraj/metrics.hpp"

using namespace gadtraj;

namespace {

// P(score+ > score-) + P(tie) / 2 over all positive/negative pairs.
double pairwise_auroc(const ScoredSet& s) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i)
        for (std::size_t j = 0; j < s.scores.size(); ++j)
            if (s.labels[i] == 1 && s.labels[j] == 0) {
                pairs += 1;
                wins += s.scores[i] > s.scores[j] ? 1.0 : s.scores[i] == s.scores[j] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

ScoredSet random_set(std::mt19937_64& rng, std::size_t n, bool ties) {
    ScoredSet s;
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> coarse(0, 5);
    do {
        s = {};
        for (std::size_t i = 0; i < n; ++i) {
            s.scores.push_back(ties ? coarse(rng) / 5.0 : u(rng));
            s.labels.push_back(u(rng) < 0.3 ? 1 : 0);
        }
    } while (s.positives() == 0 || s.negatives() == 0);
    return s;
}

} // namespace

TEST(Confusion, ZeroThresholdPredictsAllPositive) {
    ScoredSet s{{0.0, 0.3, 0.9, 0.2}, {1, 0, 1, 0}};
    auto c = confusion_at_threshold(s, 0.0);
    EXPECT_EQ(c.tp, 2u);
    EXPECT_EQ(c.fp, 2u);
    EXPECT_EQ(c.tn + c.fn, 0u);
}

TEST(Confusion, ThresholdAboveMaxPredictsAllNegative) {
    ScoredSet s{{0.0, 0.3, 0.9, 0.2}, {1, 0, 1, 0}};
    auto c = confusion_at_threshold(s, std::nextafter(0.9, 1.0));
    EXPECT_EQ(c.tp + c.fp, 0u);
    EXPECT_EQ(c.tn, 2u);
    EXPECT_EQ(c.fn, 2u);
}

TEST(Confusion, DirectCount) {
    auto c = confusion_at_threshold({{0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}}, 0.5);
    EXPECT_EQ(c.tp, 2u);
    EXPECT_EQ(c.tn, 2u);
    EXPECT_EQ(c.fp, 0u);
    EXPECT_EQ(c.fn, 0u);
}

TEST(Confusion, TieAtThresholdIsPositive) {
    auto c = confusion_at_threshold({{0.5, 0.5}, {1, 0}}, 0.5);
    EXPECT_EQ(c.tp, 1u);
    EXPECT_EQ(c.fp, 1u);
}

TEST(Confusion, CountsPartitionClasses) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        auto s = random_set(rng, 30, trial % 2);
        const double g = std::uniform_real_distribution<double>(0, 1)(rng);
        auto c = confusion_at_threshold(s, g);
        EXPECT_EQ(c.tp + c.fn, s.positives());
        EXPECT_EQ(c.fp + c.tn, s.negatives());
    }
}

TEST(Rates, Formulas) {
    auto r = classification_rates({3, 1, 5, 2});
    EXPECT_DOUBLE_EQ(r.precision, 0.75);
    EXPECT_DOUBLE_EQ(r.tpr, 0.6);
    EXPECT_DOUBLE_EQ(r.recall, 0.6);
    EXPECT_DOUBLE_EQ(r.fnr, 0.4);
    EXPECT_DOUBLE_EQ(r.fpr, 1.0 / 6.0);
}

TEST(Rates, NoFalseNegatives) {
    auto r = classification_rates({4, 2, 3, 0});
    EXPECT_EQ(r.recall, 1.0);
    EXPECT_EQ(r.fnr, 0.0);
}

TEST(Rates, NoPositivesIsFlagged) {
    auto r = classification_rates({0, 2, 3, 0});
    EXPECT_TRUE(r.tpr_undefined);
    EXPECT_EQ(r.tpr, 0.0);
    EXPECT_FALSE(r.fpr_undefined);
    auto none = classification_rates({0, 0, 3, 1});
    EXPECT_TRUE(none.precision_undefined);
    EXPECT_EQ(none.precision, 0.0);
}

TEST(Auroc, PerfectSeparation) {
    EXPECT_EQ(auroc({{0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}}), 1.0);
}

TEST(Auroc, FourPointExample) {
    ScoredSet s{{0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1}};
    EXPECT_DOUBLE_EQ(pairwise_auroc(s), 0.75);
    EXPECT_DOUBLE_EQ(auroc(s), 0.75);
}

TEST(Auroc, ShuffledLabelsNearHalf) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    ScoredSet s;
    for (int i = 0; i < 20000; ++i) {
        s.scores.push_back(u(rng));
        s.labels.push_back(u(rng) < 0.2 ? 1 : 0);
    }
    EXPECT_NEAR(auroc(s), 0.5, 0.02);
}

TEST(Auroc, SingleClassIsUndefined) {
    EXPECT_THROW(auroc({{0.1, 0.2}, {0, 0}}), UndefinedMetricError);
    EXPECT_THROW(auroc({{0.1, 0.2}, {1, 1}}), UndefinedMetricError);
}

TEST(Auroc, MatchesPairwiseOracle) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        auto s = random_set(rng, 2 + trial % 49, trial % 3 == 0);
        EXPECT_NEAR(auroc(s), pairwise_auroc(s), 1e-9);
    }
}

TEST(Auroc, InvariantUnderIncreasingTransform) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_set(rng, 40, trial % 2);
        auto t = s;
        for (auto& v : t.scores) v = std::exp(3.0 * v) + 7.0;
        EXPECT_NEAR(auroc(s), auroc(t), 1e-12);
    }
}

TEST(Auroc, FlippedLabelsComplement) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_set(rng, 40, false);
        auto f = s;
        for (auto& l : f.labels) l = 1 - l;
        EXPECT_NEAR(auroc(f), 1.0 - auroc(s), 1e-12);
    }
}

TEST(Auprc, PerfectRanking) {
    EXPECT_EQ(auprc({{0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}}), 1.0);
}

TEST(Auprc, ConstantScoresGivePrevalence) {
    EXPECT_DOUBLE_EQ(auprc({{0.5, 0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1, 0}}), 0.4);
}

TEST(Auprc, PositiveRankedSecondOfThree) {
    EXPECT_DOUBLE_EQ(auprc({{0.9, 0.5, 0.1}, {0, 1, 0}}), 0.5);
}

TEST(Auprc, MatchesHandRolledAveragePrecision) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        auto s = random_set(rng, 30, false);
        // distinct scores: AP = mean over positives of precision at their rank
        std::vector<std::size_t> idx(s.scores.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
        double hits = 0, ap = 0;
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (s.labels[idx[k]] == 1) {
                hits += 1;
                ap += hits / double(k + 1);
            }
        EXPECT_NEAR(auprc(s), ap / hits, 1e-12);
    }
}

TEST(Auprc, NoPositivesIsUndefined) {
    EXPECT_THROW(auprc({{0.1, 0.2}, {0, 0}}), UndefinedMetricError);
}

TEST(ScoredSet, LengthMismatchRejected) {
    EXPECT_THROW(auroc({{0.1, 0.2}, {0}}), ContractError);
}
