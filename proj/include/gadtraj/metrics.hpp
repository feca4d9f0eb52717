#pragma once

#include <algorithm>
#include <limits>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gadtraj/tensor.hpp"

namespace gadtraj {

class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Group anomaly scores with their ground-truth labels (1 = abnormal).
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;

    std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
    std::size_t negatives() const { return labels.size() - positives(); }

    void validate() const {
        if (scores.size() != labels.size()) throw ContractError("ScoredSet: scores and labels differ in length");
        for (int l : labels)
            if (l != 0 && l != 1) throw ContractError("ScoredSet: labels must be 0 or 1");
    }
};

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Predicted abnormal iff score >= threshold.
inline Confusion confusion_at_threshold(const ScoredSet& s, double threshold) {
    s.validate();
    Confusion c;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        const bool pred = s.scores[i] >= threshold;
        if (s.labels[i] == 1)
            (pred ? c.tp : c.fn)++;
        else
            (pred ? c.fp : c.tn)++;
    }
    return c;
}

struct Rates {
    double tpr = 0, fpr = 0, fnr = 0, precision = 0, recall = 0;
    bool tpr_undefined = false;       // P == 0
    bool fpr_undefined = false;       // N == 0
    bool precision_undefined = false; // TP + FP == 0
};

inline Rates classification_rates(const Confusion& c) {
    Rates r;
    const auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
        undefined = den == 0;
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    r.tpr = ratio(c.tp, c.tp + c.fn, r.tpr_undefined);
    r.fpr = ratio(c.fp, c.fp + c.tn, r.fpr_undefined);
    r.fnr = r.tpr_undefined ? 0.0 : 1.0 - r.tpr;
    r.precision = ratio(c.tp, c.tp + c.fp, r.precision_undefined);
    r.recall = r.tpr;
    return r;
}

namespace detail {

// Indices sorted by descending score; ties keep input order.
inline std::vector<std::size_t> rank_descending(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

} // namespace detail

struct CurvePoint {
    double threshold;
    double x, y;
};

/// ROC points (FPR, TPR), one per distinct threshold, starting at (0, 0).
inline std::vector<CurvePoint> roc_curve(const ScoredSet& s) {
    s.validate();
    const double P = static_cast<double>(s.positives()), N = static_cast<double>(s.negatives());
    if (P == 0 || N == 0) throw UndefinedMetricError("ROC needs both classes present");
    auto idx = detail::rank_descending(s.scores);
    std::vector<CurvePoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0, fp = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        (s.labels[idx[k]] == 1 ? tp : fp) += 1;
        if (k + 1 == idx.size() || s.scores[idx[k + 1]] != s.scores[idx[k]])
            pts.push_back({s.scores[idx[k]], fp / N, tp / P});
    }
    return pts;
}

/// Trapezoidal area under the ROC curve.
inline double auroc(const ScoredSet& s) {
    auto pts = roc_curve(s);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) area += (pts[i].x - pts[i - 1].x) * (pts[i].y + pts[i - 1].y) / 2.0;
    return area;
}

/// Precision/recall points (recall, precision), one per distinct threshold.
inline std::vector<CurvePoint> pr_curve(const ScoredSet& s) {
    s.validate();
    const double P = static_cast<double>(s.positives());
    if (P == 0) throw UndefinedMetricError("precision-recall needs at least one positive");
    auto idx = detail::rank_descending(s.scores);
    std::vector<CurvePoint> pts;
    double tp = 0, fp = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        (s.labels[idx[k]] == 1 ? tp : fp) += 1;
        if (k + 1 == idx.size() || s.scores[idx[k + 1]] != s.scores[idx[k]])
            pts.push_back({s.scores[idx[k]], tp / P, tp / (tp + fp)});
    }
    return pts;
}

/// Step-wise average precision: sum over thresholds of (R_k - R_{k-1}) * P_k.
inline double auprc(const ScoredSet& s) {
    double ap = 0.0, prev_recall = 0.0;
    for (const auto& p : pr_curve(s)) {
        ap += (p.x - prev_recall) * p.y;
        prev_recall = p.x;
    }
    return ap;
}

} // namespace gadtraj
