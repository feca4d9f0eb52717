#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gadtraj/data.hpp"
#include "gadtraj/gadformer.hpp"

namespace gadtraj {

/// Attention matrices of M groups, each [block][head], all of one square shape.
struct AttentionStack {
    std::vector<std::string> group_ids;
    std::vector<GroupAttention> groups;

    std::size_t num_groups() const { return groups.size(); }
    std::size_t num_blocks() const { return groups.empty() ? 0 : groups.front().size(); }
};

struct BasConfig {
    double ratio_top_n = 0.05;

    void validate() const {
        if (!(ratio_top_n > 0.0 && ratio_top_n <= 1.0)) throw ContractError("BasConfig: ratio_topN must lie in (0, 1]");
    }
};

struct BasReport {
    std::vector<std::string> group_ids;
    std::vector<std::vector<double>> bas;          // [group][block]
    std::vector<std::vector<std::size_t>> top_n;   // [block] group indices, most distant first
    std::vector<double> block_means;               // mean bas per block
    std::vector<std::string> warnings;
};

namespace detail {

inline double frobenius_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline std::vector<double> mean_of(const std::vector<const std::vector<double>*>& mats) {
    std::vector<double> out(mats.front()->size(), 0.0);
    for (const auto* m : mats)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*m)[i];
    for (auto& v : out) v /= static_cast<double>(mats.size());
    return out;
}

} // namespace detail

/**
 * Block Attention-anomaly Score.
 *
 * Per block: average each group's heads, average those over all groups,
 * take the round(ratio * M) groups (at least one) farthest from that mean in
 * Frobenius distance, and score each group by its distance to the mean
 * relative to the distance of the top-N average, clamped to 1. Ties in the
 * ranking go to the lower group index. A block whose top-N average coincides
 * with the mean scores 0 everywhere and adds a warning.
 */
inline BasReport compute_bas(const AttentionStack& stack, const BasConfig& cfg = {}) {
    cfg.validate();
    const std::size_t M = stack.num_groups();
    if (M < 2) throw ContractError("BAS needs at least two groups");
    const std::size_t B = stack.num_blocks();
    for (const auto& g : stack.groups) {
        if (g.size() != B) throw DimensionError("BAS: groups disagree on block count");
        for (const auto& heads : g)
            if (heads.empty()) throw DimensionError("BAS: block without attention heads");
    }

    BasReport rep;
    rep.group_ids = stack.group_ids;
    rep.bas.assign(M, std::vector<double>(B, 0.0));
    const auto top_n =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.ratio_top_n * static_cast<double>(M))));

    for (std::size_t b = 0; b < B; ++b) {
        std::vector<std::vector<double>> group_mean(M);
        for (std::size_t m = 0; m < M; ++m) {
            const auto& heads = stack.groups[m][b];
            std::vector<const std::vector<double>*> tmp;
            std::vector<std::vector<double>> copies;
            copies.reserve(heads.size());
            for (const auto& h : heads) {
                if (h.size() != heads.front().size()) throw DimensionError("BAS: head matrices differ in shape");
                copies.emplace_back(h.data().begin(), h.data().end());
            }
            for (const auto& c : copies) tmp.push_back(&c);
            group_mean[m] = detail::mean_of(tmp);
            if (group_mean[m].size() != group_mean[0].size()) throw DimensionError("BAS: matrices differ in shape");
        }
        std::vector<const std::vector<double>*> all;
        for (const auto& g : group_mean) all.push_back(&g);
        const auto block_mean = detail::mean_of(all);

        std::vector<double> dist(M);
        for (std::size_t m = 0; m < M; ++m) dist[m] = detail::frobenius_distance(group_mean[m], block_mean);
        std::vector<std::size_t> order(M);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return dist[x] > dist[y]; });
        order.resize(std::min(top_n, M));

        std::vector<const std::vector<double>*> top;
        for (auto i : order) top.push_back(&group_mean[i]);
        const double ref = detail::frobenius_distance(detail::mean_of(top), block_mean);
        rep.top_n.push_back(order);

        if (ref == 0.0) {
            rep.warnings.push_back("block " + std::to_string(b) +
                                   ": top-N attention average equals the block average; scores set to 0");
            continue;
        }
        for (std::size_t m = 0; m < M; ++m) rep.bas[m][b] = std::min(1.0, dist[m] / ref);
    }

    rep.block_means.assign(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t m = 0; m < M; ++m) rep.block_means[b] += rep.bas[m][b];
        rep.block_means[b] /= static_cast<double>(M);
    }
    return rep;
}

/// Runs the model over every group in eval mode and collects its attention.
inline AttentionStack collect_attention(const GadFormer& model, const std::vector<PaddedGroup>& groups) {
    NoGradGuard no_grad;
    AttentionStack s;
    for (const auto& g : groups) {
        s.group_ids.push_back(g.id);
        s.groups.push_back(model.forward(g, ForwardContext{}, true).attention);
    }
    return s;
}

/// CSV with columns group_id,block,bas[,label].
inline void write_bas_csv(std::ostream& out, const BasReport& rep, const std::vector<std::optional<int>>* labels) {
    out << "group_id,block,bas";
    if (labels) out << ",label";
    out << '\n';
    for (std::size_t m = 0; m < rep.bas.size(); ++m)
        for (std::size_t b = 0; b < rep.bas[m].size(); ++b) {
            out << rep.group_ids[m] << ',' << b << ',' << detail::format_double(rep.bas[m][b]);
            if (labels) {
                out << ',';
                if ((*labels)[m]) out << *(*labels)[m];
            }
            out << '\n';
        }
}

/// Reads back a CSV written by write_bas_csv. Rows must be grouped by id.
inline BasReport read_bas_csv(std::istream& in) {
    BasReport rep;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() < 3) throw ParseError("BAS CSV row has fewer than 3 cells");
        std::string id(detail::trim(cells[0]));
        auto b = detail::parse_integer(cells[1]);
        auto v = detail::parse_double(cells[2]);
        if (!b || !v) throw ParseError("BAS CSV row is not numeric: " + line);
        if (rep.group_ids.empty() || rep.group_ids.back() != id) {
            rep.group_ids.push_back(id);
            rep.bas.emplace_back();
        }
        if (static_cast<std::size_t>(*b) != rep.bas.back().size()) throw ParseError("BAS CSV blocks out of order");
        rep.bas.back().push_back(*v);
    }
    return rep;
}

/// One SVG scatter per block: group index against BAS, anomalies in red when labels are given.
inline std::string bas_block_svg(const BasReport& rep, std::size_t block, const std::vector<std::optional<int>>* labels) {
    constexpr double W = 640, H = 360, L = 56, R = 16, T = 28, Bm = 44;
    const std::size_t M = rep.bas.size();
    const auto px = [&](std::size_t m) { return L + (W - L - R) * (M > 1 ? static_cast<double>(m) / static_cast<double>(M - 1) : 0.5); };
    const auto py = [&](double v) { return T + (H - T - Bm) * (1.0 - v); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << ' ' << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
       << "Encoder block " << block << ": block attention-anomaly score</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << L << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
    for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0})
        os << "<text x=\"" << L - 6 << "\" y=\"" << py(tick) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick << "</text>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">group index</text>\n";
    for (std::size_t m = 0; m < M; ++m) {
        const bool anomalous = labels && (*labels)[m] && *(*labels)[m] == 1;
        os << "<circle cx=\"" << px(m) << "\" cy=\"" << py(rep.bas[m][block]) << "\" r=\"" << (anomalous ? 3.5 : 2.0)
           << "\" fill=\"" << (anomalous ? "#d62728" : "#1f77b4") << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Writes bas.csv and bas_block<b>.svg for every block into `dir`.
inline std::vector<std::filesystem::path> export_bas_report(const BasReport& rep,
                                                            const std::vector<std::optional<int>>* labels,
                                                            const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::vector<std::filesystem::path> written;
    auto open = [&](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto p = dir / "bas.csv";
        auto f = open(p);
        write_bas_csv(f, rep, labels);
        written.push_back(p);
    }
    const std::size_t B = rep.bas.empty() ? 0 : rep.bas.front().size();
    for (std::size_t b = 0; b < B; ++b) {
        auto p = dir / ("bas_block" + std::to_string(b) + ".svg");
        auto f = open(p);
        f << bas_block_svg(rep, b, labels);
        written.push_back(p);
    }
    return written;
}

} // namespace gadtraj
