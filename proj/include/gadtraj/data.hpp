#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gadtraj/random.hpp"
#include "gadtraj/tensor.hpp"

namespace gadtraj {

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LearningSetting { unsupervised, semi_supervised };

inline std::string to_string(LearningSetting s) {
    return s == LearningSetting::unsupervised ? "unsupervised" : "semi";
}

inline LearningSetting parse_setting(std::string_view s) {
    if (s == "unsupervised" || s == "unsu" || s == "U") return LearningSetting::unsupervised;
    if (s == "semi" || s == "semi-supervised" || s == "E") return LearningSetting::semi_supervised;
    throw ContractError("unknown learning setting '" + std::string(s) + "'");
}

struct TrajectoryPoint {
    std::vector<double> attributes;

    bool operator==(const TrajectoryPoint&) const = default;
};

/// One group: the ordered points of a single person.
struct Trajectory {
    std::string id;
    std::vector<TrajectoryPoint> points;
    std::optional<int> label;

    std::size_t length() const { return points.size(); }
    std::size_t dim() const { return points.empty() ? 0 : points.front().attributes.size(); }
    bool is_anomaly() const { return label.value_or(0) == 1; }

    bool operator==(const Trajectory&) const = default;
};

struct GroupDataset {
    std::vector<Trajectory> trajectories;
    LearningSetting setting = LearningSetting::unsupervised;
    std::size_t max_len = 0;

    std::size_t size() const { return trajectories.size(); }
    bool empty() const { return trajectories.empty(); }
    std::size_t dim() const { return trajectories.empty() ? 0 : trajectories.front().dim(); }

    std::size_t anomaly_count() const {
        return static_cast<std::size_t>(
            std::count_if(trajectories.begin(), trajectories.end(), [](const auto& t) { return t.is_anomaly(); }));
    }
    std::size_t labeled_count() const {
        return static_cast<std::size_t>(
            std::count_if(trajectories.begin(), trajectories.end(), [](const auto& t) { return t.label.has_value(); }));
    }
    std::size_t longest() const {
        std::size_t n = 0;
        for (const auto& t : trajectories) n = std::max(n, t.length());
        return n;
    }

    bool operator==(const GroupDataset&) const = default;
};

/// Column names of the tabular trajectory format.
struct CsvSchema {
    std::string person = "Person";
    std::string step = "Sequence step";
    std::vector<std::string> coords{"XCoord", "YCoord"};
    std::string label = "GAD-Label";
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
    s = trim(s);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Numeric ids order numerically, everything else lexicographically.
inline bool id_less(const std::string& a, const std::string& b) {
    auto ia = parse_integer(a), ib = parse_integer(b);
    if (ia && ib) return *ia < *ib;
    if (ia != ib && (ia || ib)) return static_cast<bool>(ia);
    return a < b;
}

} // namespace detail

inline GroupDataset parse_tabular_csv(std::istream& in, const CsvSchema& schema = {}) {
    std::string header;
    if (!std::getline(in, header)) throw SchemaError("empty CSV input: header row missing");
    if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
    auto cols = detail::split_csv_line(header);
    auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (detail::trim(cols[i]) == name) return i;
        return std::nullopt;
    };
    auto require_col = [&](const std::string& name) {
        auto c = find_col(name);
        if (!c) throw SchemaError("missing column '" + name + "'");
        return *c;
    };
    const std::size_t person_col = require_col(schema.person);
    const std::size_t step_col = require_col(schema.step);
    std::vector<std::size_t> coord_cols;
    for (const auto& c : schema.coords) coord_cols.push_back(require_col(c));
    const auto label_col = schema.label.empty() ? std::nullopt : find_col(schema.label);

    struct Rows {
        std::map<long long, std::vector<double>> by_step;
        std::optional<int> label;
    };
    std::map<std::string, Rows> groups;

    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        auto cell = [&](std::size_t i) -> std::string_view {
            if (i >= cells.size()) throw ParseError("row " + std::to_string(row) + ": too few cells");
            return detail::trim(cells[i]);
        };
        std::string person(cell(person_col));
        if (person.empty()) throw ParseError("row " + std::to_string(row) + ": empty person id");
        auto step = detail::parse_integer(cell(step_col));
        if (!step) throw ParseError("row " + std::to_string(row) + ": non-integer sequence step '" +
                                    std::string(cell(step_col)) + "'");
        std::vector<double> attrs;
        for (std::size_t c : coord_cols) {
            auto v = detail::parse_double(cell(c));
            if (!v) throw ParseError("row " + std::to_string(row) + ": non-numeric value '" + std::string(cell(c)) +
                                     "' in column " + std::string(detail::trim(cols[c])));
            attrs.push_back(*v);
        }
        auto& g = groups[person];
        if (!g.by_step.emplace(*step, std::move(attrs)).second)
            throw IntegrityError("row " + std::to_string(row) + ": duplicate (Person, Sequence step) = (" + person +
                                 ", " + std::to_string(*step) + ")");
        if (label_col && *label_col < cells.size()) {
            auto lv = detail::trim(cells[*label_col]);
            if (!lv.empty()) {
                auto l = detail::parse_integer(lv);
                if (!l || (*l != 0 && *l != 1))
                    throw ParseError("row " + std::to_string(row) + ": label must be 0 or 1, got '" +
                                     std::string(lv) + "'");
                if (g.label && *g.label != *l)
                    throw IntegrityError("row " + std::to_string(row) + ": conflicting labels for person " + person);
                g.label = static_cast<int>(*l);
            }
        }
    }

    GroupDataset ds;
    for (auto& [id, g] : groups) {
        if (g.by_step.size() < 2)
            throw IntegrityError("person " + id + " has a single point; a group needs at least two members");
        Trajectory t;
        t.id = id;
        t.label = g.label;
        for (auto& [step, attrs] : g.by_step) t.points.push_back({std::move(attrs)});
        ds.trajectories.push_back(std::move(t));
    }
    std::sort(ds.trajectories.begin(), ds.trajectories.end(),
              [](const auto& a, const auto& b) { return detail::id_less(a.id, b.id); });
    ds.max_len = ds.longest();
    return ds;
}

inline GroupDataset load_tabular_csv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return parse_tabular_csv(in, schema);
}

/// Writes the tabular format. Steps are renumbered 0..n-1 and the group label
/// is stated once, on the row of step 1 (step 0 for single-point groups).
inline void write_tabular_csv(std::ostream& out, const GroupDataset& ds, const CsvSchema& schema = {}) {
    bool has_labels = !schema.label.empty() && ds.labeled_count() > 0;
    out << schema.person << ',' << schema.step;
    for (const auto& c : schema.coords) out << ',' << c;
    if (has_labels) out << ',' << schema.label;
    out << '\n';
    for (const auto& t : ds.trajectories) {
        const std::size_t label_row = t.points.size() > 1 ? 1 : 0;
        for (std::size_t i = 0; i < t.points.size(); ++i) {
            out << t.id << ',' << i;
            for (double v : t.points[i].attributes) out << ',' << detail::format_double(v);
            if (has_labels) {
                out << ',';
                if (i == label_row && t.label) out << *t.label;
            }
            out << '\n';
        }
    }
}

inline void save_tabular_csv(const GroupDataset& ds, const std::filesystem::path& path, const CsvSchema& schema = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_tabular_csv(out, ds, schema);
}

// ---------------------------------------------------------------------------
// Scaling

enum class ScalerKind { standard, robust };

inline std::string to_string(ScalerKind k) { return k == ScalerKind::standard ? "standard" : "robust"; }

inline ScalerKind parse_scaler(std::string_view s) {
    if (s == "standard") return ScalerKind::standard;
    if (s == "robust") return ScalerKind::robust;
    throw ContractError("unknown scaler '" + std::string(s) + "'");
}

struct ScalerParams {
    ScalerKind kind = ScalerKind::standard;
    std::vector<double> center;
    std::vector<double> scale;
};

/// Quantile by linear interpolation between order statistics of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ContractError("quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Per-feature statistics over every point of every trajectory.
inline ScalerParams fit_scaler(const GroupDataset& ds, ScalerKind kind) {
    if (ds.empty() || ds.dim() == 0) throw ContractError("cannot fit a scaler on an empty dataset");
    const std::size_t dim = ds.dim();
    ScalerParams p{kind, std::vector<double>(dim), std::vector<double>(dim)};
    for (std::size_t f = 0; f < dim; ++f) {
        std::vector<double> col;
        for (const auto& t : ds.trajectories)
            for (const auto& pt : t.points) col.push_back(pt.attributes.at(f));
        if (kind == ScalerKind::standard) {
            double m = 0.0;
            for (double v : col) m += v;
            m /= static_cast<double>(col.size());
            double var = 0.0;
            for (double v : col) var += (v - m) * (v - m);
            var /= static_cast<double>(col.size());
            p.center[f] = m;
            p.scale[f] = std::sqrt(var);
        } else {
            std::sort(col.begin(), col.end());
            p.center[f] = quantile_sorted(col, 0.5);
            p.scale[f] = quantile_sorted(col, 0.75) - quantile_sorted(col, 0.25);
        }
        if (p.scale[f] == 0.0) p.scale[f] = 1.0;
    }
    return p;
}

inline GroupDataset apply_scaler(GroupDataset ds, const ScalerParams& p) {
    for (auto& t : ds.trajectories)
        for (auto& pt : t.points) {
            if (pt.attributes.size() != p.center.size())
                throw DimensionError("scaler fitted on " + std::to_string(p.center.size()) +
                                     " features, trajectory " + t.id + " has " + std::to_string(pt.attributes.size()));
            for (std::size_t f = 0; f < pt.attributes.size(); ++f)
                pt.attributes[f] = (pt.attributes[f] - p.center[f]) / p.scale[f];
        }
    return ds;
}

inline GroupDataset invert_scaler(GroupDataset ds, const ScalerParams& p) {
    for (auto& t : ds.trajectories)
        for (auto& pt : t.points)
            for (std::size_t f = 0; f < pt.attributes.size(); ++f)
                pt.attributes[f] = pt.attributes[f] * p.scale[f] + p.center[f];
    return ds;
}

inline std::pair<GroupDataset, ScalerParams> scale_fit_transform(const GroupDataset& ds, ScalerKind kind) {
    auto p = fit_scaler(ds, kind);
    return {apply_scaler(ds, p), p};
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
    double train = 0.6;
    double valid = 0.2;
    double test = 0.2;
};

struct SplitBundle {
    GroupDataset train, valid, test;
    /// Anomalies that would push a split below the normal ratio.
    std::vector<std::string> excluded_ids;
    std::vector<std::string> warnings;
};

namespace detail {

// Largest-remainder apportionment of `total` items by `weights`.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    std::vector<std::size_t> out(weights.size(), 0);
    if (total == 0 || wsum <= 0.0) return out;
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / wsum;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        given += out[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; given < total; ++k, ++given) out[rem[k % rem.size()].second]++;
    return out;
}

} // namespace detail

/**
 * Stratified train/valid/test split.
 *
 * Normals are apportioned by the split ratios. Anomalies are apportioned over
 * the eligible splits (all three when unsupervised, valid and test when
 * semi-supervised) and capped so no split falls below `normal_ratio`; capped
 * anomalies are listed in `excluded_ids`. Unlabeled trajectories count as normal.
 */
inline SplitBundle split_dataset(const GroupDataset& ds, SplitRatios ratios, double normal_ratio,
                                 LearningSetting setting, std::uint64_t seed) {
    const double rsum = ratios.train + ratios.valid + ratios.test;
    if (std::abs(rsum - 1.0) > 1e-9 || ratios.train < 0 || ratios.valid < 0 || ratios.test < 0)
        throw ContractError("split ratios must be non-negative and sum to 1");
    if (!(normal_ratio > 0.0 && normal_ratio <= 1.0)) throw ContractError("normal_ratio must lie in (0, 1]");

    std::vector<std::size_t> normals, anomalies;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (ds.trajectories[i].is_anomaly() ? anomalies : normals).push_back(i);
    auto rng = make_rng(seed, 0x5b1u);
    std::shuffle(normals.begin(), normals.end(), rng);
    std::shuffle(anomalies.begin(), anomalies.end(), rng);

    const std::vector<double> w{ratios.train, ratios.valid, ratios.test};
    auto n_counts = detail::apportion(normals.size(), w);
    std::vector<double> aw = w;
    if (setting == LearningSetting::semi_supervised) aw[0] = 0.0;
    auto a_wanted = detail::apportion(anomalies.size(), aw);

    SplitBundle out;
    static constexpr const char* names[] = {"train", "valid", "test"};
    std::vector<std::size_t> a_counts(3);
    for (std::size_t s = 0; s < 3; ++s) {
        const double cap_exact = static_cast<double>(n_counts[s]) * (1.0 - normal_ratio) / normal_ratio;
        const auto cap = static_cast<std::size_t>(std::llround(cap_exact));
        const bool eligible = aw[s] > 0.0;
        a_counts[s] = std::min(a_wanted[s], eligible ? cap : std::size_t{0});
        if (eligible && a_counts[s] < cap)
            out.warnings.push_back(std::string("insufficient anomalies for normal ratio ") +
                                   detail::format_double(normal_ratio) + " in " + names[s] + " split: have " +
                                   std::to_string(a_counts[s]) + ", want " + std::to_string(cap));
    }

    GroupDataset* splits[] = {&out.train, &out.valid, &out.test};
    std::size_t ni = 0, ai = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        splits[s]->setting = setting;
        splits[s]->max_len = ds.max_len;
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < n_counts[s]; ++k) idx.push_back(normals[ni++]);
        for (std::size_t k = 0; k < a_wanted[s]; ++k, ++ai) {
            if (k < a_counts[s])
                idx.push_back(anomalies[ai]);
            else
                out.excluded_ids.push_back(ds.trajectories[anomalies[ai]].id);
        }
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) splits[s]->trajectories.push_back(ds.trajectories[i]);
    }
    if (!out.excluded_ids.empty())
        out.warnings.push_back(std::to_string(out.excluded_ids.size()) +
                               " anomalies excluded to respect the normal ratio");
    return out;
}

// ---------------------------------------------------------------------------
// Pseudo-labeling

/// First principal component z-score labeling: label 1 iff z is outside ]z_low, z_high[.
inline GroupDataset pca_zscore_label(GroupDataset ds, double z_low = -2.1, double z_high = 2.1) {
    if (ds.size() < 2) throw ContractError("PCA labeling needs at least two trajectories");
    const std::size_t len = ds.longest();
    const std::size_t dim = ds.dim();
    const auto m = static_cast<Eigen::Index>(ds.size());
    const auto d = static_cast<Eigen::Index>(len * dim);

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& t = ds.trajectories[static_cast<std::size_t>(i)];
        for (std::size_t p = 0; p < t.points.size(); ++p)
            for (std::size_t f = 0; f < dim; ++f) x(i, static_cast<Eigen::Index>(p * dim + f)) = t.points[p].attributes[f];
    }
    const Eigen::RowVectorXd mu = x.colwise().mean();
    x.rowwise() -= mu;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(m);

    Eigen::VectorXd proj = Eigen::VectorXd::Zero(m);
    if (cov.norm() > 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const Eigen::VectorXd pc = eig.eigenvectors().col(d - 1); // eigenvalues ascend
        proj = x * pc;
    }
    const double pm = proj.mean();
    const double psd = std::sqrt((proj.array() - pm).square().mean());
    for (Eigen::Index i = 0; i < m; ++i) {
        const double z = psd > 1e-12 ? (proj(i) - pm) / psd : 0.0;
        ds.trajectories[static_cast<std::size_t>(i)].label = (z <= z_low || z >= z_high) ? 1 : 0;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Segments and padding

struct Segment {
    std::vector<TrajectoryPoint> points; // always L points, zero-padded
    std::size_t valid = 0;
};

inline std::vector<Segment> segment_trajectory(const Trajectory& t, std::size_t L) {
    if (L < 1) throw ContractError("segment length must be at least 1");
    std::vector<Segment> out;
    const std::size_t dim = t.dim();
    for (std::size_t start = 0; start < t.points.size(); start += L) {
        Segment s;
        for (std::size_t k = 0; k < L; ++k) {
            if (start + k < t.points.size()) {
                s.points.push_back(t.points[start + k]);
                ++s.valid;
            } else {
                s.points.push_back({std::vector<double>(dim, 0.0)});
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Re-expresses a trajectory with each L-point segment flattened into one member.
inline Trajectory segments_as_members(const Trajectory& t, std::size_t L) {
    if (L == 1) return t;
    Trajectory out{t.id, {}, t.label};
    for (const auto& s : segment_trajectory(t, L)) {
        TrajectoryPoint p;
        for (const auto& q : s.points) p.attributes.insert(p.attributes.end(), q.attributes.begin(), q.attributes.end());
        out.points.push_back(std::move(p));
    }
    return out;
}

inline GroupDataset segments_as_members(GroupDataset ds, std::size_t L) {
    if (L == 1) return ds;
    for (auto& t : ds.trajectories) t = segments_as_members(t, L);
    ds.max_len = ds.longest();
    return ds;
}

/// A trajectory laid out as a fixed [seq_len × dim] matrix plus validity mask.
struct PaddedGroup {
    std::string id;
    std::size_t seq_len = 0;
    std::size_t dim = 0;
    std::vector<double> values;
    std::vector<bool> valid;
    std::optional<int> label;

    std::size_t length() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true)); }
    Tensor as_tensor() const { return Tensor({seq_len, dim}, values); }
};

/// Zero-pads (or truncates) to seq_len points.
inline PaddedGroup pad_trajectory(const Trajectory& t, std::size_t seq_len) {
    if (seq_len == 0) throw ContractError("seq_len must be positive");
    PaddedGroup g{t.id, seq_len, t.dim(), std::vector<double>(seq_len * t.dim(), 0.0),
                  std::vector<bool>(seq_len, false), t.label};
    const std::size_t n = std::min(seq_len, t.points.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(t.points[i].attributes.begin(), t.points[i].attributes.end(),
                  g.values.begin() + static_cast<std::ptrdiff_t>(i * g.dim));
        g.valid[i] = true;
    }
    return g;
}

inline std::vector<PaddedGroup> pad_dataset(const GroupDataset& ds, std::size_t seq_len) {
    std::vector<PaddedGroup> out;
    out.reserve(ds.size());
    for (const auto& t : ds.trajectories) out.push_back(pad_trajectory(t, seq_len));
    return out;
}

} // namespace gadtraj
