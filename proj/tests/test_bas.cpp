#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "gadtraj/bas.hpp"

using namespace gadtraj;
namespace fs = std::filesystem;

namespace {

Tensor mat(std::size_t n, std::vector<double> v) { return Tensor({n, n}, std::move(v)); }

// Random row-stochastic matrices, stack[m][b][h].
AttentionStack random_stack(std::size_t M, std::size_t B, std::size_t H, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    AttentionStack s;
    for (std::size_t m = 0; m < M; ++m) {
        s.group_ids.push_back("g" + std::to_string(m));
        GroupAttention g(B);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < H; ++h) {
                std::vector<double> v(n * n);
                for (std::size_t r = 0; r < n; ++r) {
                    double total = 0;
                    for (std::size_t c = 0; c < n; ++c) total += v[r * n + c] = u(rng);
                    for (std::size_t c = 0; c < n; ++c) v[r * n + c] /= total;
                }
                g[b].push_back(mat(n, v));
            }
        s.groups.push_back(g);
    }
    return s;
}

fs::path temp_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("gadtraj_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    return d;
}

} // namespace

TEST(Bas, ThreeGroupHandExample) {
    // a_m = c * I for c in {1, 1, 2}; a_b = 4/3 I.
    // d = sqrt(2) * {1/3, 1/3, 2/3}; topN = round(0.34 * 3) = 1 picks group 2 (c = 2),
    // whose distance is the reference, so bas = {0.5, 0.5, 1}.
    AttentionStack s;
    for (double c : {1.0, 1.0, 2.0}) {
        s.group_ids.push_back(std::to_string(c));
        s.groups.push_back({{mat(2, {c, 0, 0, c})}});
    }
    auto r = compute_bas(s, {0.34});
    ASSERT_EQ(r.top_n.size(), 1u);
    EXPECT_EQ(r.top_n[0], (std::vector<std::size_t>{2}));
    EXPECT_NEAR(r.bas[0][0], 0.5, 1e-15);
    EXPECT_NEAR(r.bas[1][0], 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(r.bas[2][0], 1.0);
    EXPECT_NEAR(r.block_means[0], 2.0 / 3.0, 1e-15);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Bas, GroupAtTheMeanScoresZero) {
    AttentionStack s;
    for (double c : {1.0, 2.0, 3.0}) s.groups.push_back({{mat(2, {c, 0, 0, c})}});
    s.group_ids = {"a", "b", "c"};
    auto r = compute_bas(s, {0.3});
    EXPECT_EQ(r.bas[1][0], 0.0);
}

TEST(Bas, UniqueMostDistantGroupScoresOne) {
    auto s = random_stack(10, 2, 2, 4, 1);
    // push group 6 far away in block 1
    for (auto& h : s.groups[6][1]) h = mat(4, std::vector<double>(16, 5.0));
    auto r = compute_bas(s, {0.05}); // round(0.5) = 1 under half-away rounding
    EXPECT_EQ(r.top_n[1], (std::vector<std::size_t>{6}));
    EXPECT_EQ(r.bas[6][1], 1.0);
}

TEST(Bas, TopNHasMinimumOne) {
    auto s = random_stack(5, 1, 1, 3, 2);
    auto r = compute_bas(s, {0.01});
    EXPECT_EQ(r.top_n[0].size(), 1u);
}

TEST(Bas, FartherThanTopNAverageClampsToOne) {
    auto s = random_stack(20, 1, 1, 3, 3);
    auto r = compute_bas(s, {0.2});
    // the single most distant group is farther than the top-4 average
    EXPECT_EQ(r.bas[r.top_n[0][0]][0], 1.0);
}

TEST(Bas, IdenticalMatricesGiveDegenerateWarning) {
    AttentionStack s;
    for (int m = 0; m < 4; ++m) {
        s.group_ids.push_back(std::to_string(m));
        s.groups.push_back({{mat(2, {0.5, 0.5, 0.5, 0.5})}, {mat(2, {0.5, 0.5, 0.5, 0.5})}});
    }
    s.groups[0][1][0] = mat(2, {1, 0, 0, 1}); // block 1 is not degenerate
    auto r = compute_bas(s);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("block 0"), std::string::npos);
    for (const auto& g : r.bas) EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(r.bas[0][1], 1.0);
}

TEST(Bas, ScoresLieInUnitInterval) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto r = compute_bas(random_stack(30, 3, 2, 5, seed));
        for (const auto& g : r.bas)
            for (double v : g) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
    }
}

TEST(Bas, InvariantToCommonPositiveScale) {
    auto s = random_stack(25, 2, 2, 4, 4);
    auto scaled = s;
    for (auto& g : scaled.groups)
        for (auto& h : g[1])
            for (auto& v : h.mutable_data()) v *= 7.5;
    auto a = compute_bas(s), b = compute_bas(scaled);
    for (std::size_t m = 0; m < 25; ++m)
        for (std::size_t blk = 0; blk < 2; ++blk) EXPECT_NEAR(a.bas[m][blk], b.bas[m][blk], 1e-12);
}

TEST(Bas, InvariantToHeadOrder) {
    auto s = random_stack(15, 2, 3, 4, 5);
    auto swapped = s;
    for (auto& g : swapped.groups)
        for (auto& heads : g) std::reverse(heads.begin(), heads.end());
    auto a = compute_bas(s), b = compute_bas(swapped);
    for (std::size_t m = 0; m < 15; ++m)
        for (std::size_t blk = 0; blk < 2; ++blk) EXPECT_NEAR(a.bas[m][blk], b.bas[m][blk], 1e-12);
}

TEST(Bas, GroupPermutationPermutesScores) {
    auto s = random_stack(12, 2, 2, 3, 6);
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(7);
    std::shuffle(perm.begin(), perm.end(), rng);
    AttentionStack p;
    for (auto i : perm) {
        p.group_ids.push_back(s.group_ids[i]);
        p.groups.push_back(s.groups[i]);
    }
    auto a = compute_bas(s, {0.25}), b = compute_bas(p, {0.25});
    for (std::size_t k = 0; k < 12; ++k)
        for (std::size_t blk = 0; blk < 2; ++blk) EXPECT_NEAR(b.bas[k][blk], a.bas[perm[k]][blk], 1e-12);
}

TEST(Bas, Deterministic) {
    auto s = random_stack(20, 2, 2, 4, 8);
    auto a = compute_bas(s), b = compute_bas(s);
    EXPECT_EQ(a.bas, b.bas);
    EXPECT_EQ(a.top_n, b.top_n);
}

TEST(Bas, InvalidInputsRejected) {
    auto s = random_stack(1, 1, 1, 2, 9);
    EXPECT_THROW(compute_bas(s), ContractError);
    EXPECT_THROW(compute_bas(random_stack(4, 1, 1, 2, 9), {0.0}), ContractError);
    EXPECT_THROW(compute_bas(random_stack(4, 1, 1, 2, 9), {1.5}), ContractError);
}

TEST(Bas, ModelAttentionFeedsBas) {
    ModelConfig c;
    c.seq_len = 6;
    c.dim_em = 4;
    c.heads = 2;
    c.blocks = 3;
    c.dim_ffn = 8;
    GadFormer model(c, 1);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n01;
    std::vector<PaddedGroup> groups;
    for (int m = 0; m < 8; ++m) {
        Trajectory t{std::to_string(m), {}, 0};
        for (int k = 0; k < 4 + m % 3; ++k) t.points.push_back({{n01(rng), n01(rng)}});
        groups.push_back(pad_trajectory(t, 6));
    }
    auto stack = collect_attention(model, groups);
    ASSERT_EQ(stack.num_groups(), 8u);
    ASSERT_EQ(stack.num_blocks(), 3u);
    auto r = compute_bas(stack);
    EXPECT_EQ(r.bas.size(), 8u);
    EXPECT_EQ(r.block_means.size(), 3u);
}

TEST(BasExport, OneCsvPlusOnePlotPerBlock) {
    auto r = compute_bas(random_stack(10, 4, 2, 3, 11));
    std::vector<std::optional<int>> labels(10, 0);
    labels[3] = 1;
    auto dir = temp_dir("export");
    auto files = export_bas_report(r, &labels, dir);
    ASSERT_EQ(files.size(), 5u);
    std::size_t svgs = 0;
    for (const auto& f : files) {
        EXPECT_TRUE(fs::exists(f));
        svgs += f.extension() == ".svg";
    }
    EXPECT_EQ(svgs, 4u);
    std::ifstream svg(dir / "bas_block0.svg");
    std::string text((std::istreambuf_iterator<char>(svg)), {});
    EXPECT_NE(text.find("#d62728"), std::string::npos);
    fs::remove_all(dir);
}

TEST(BasExport, NoLabelsMeansNoAnomalyMarkers) {
    auto r = compute_bas(random_stack(10, 2, 1, 3, 12));
    auto svg = bas_block_svg(r, 0, nullptr);
    EXPECT_EQ(svg.find("#d62728"), std::string::npos);
    std::ostringstream csv;
    write_bas_csv(csv, r, nullptr);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "group_id,block,bas");
}

TEST(BasExport, CsvRoundTripIsBitExact) {
    auto r = compute_bas(random_stack(17, 3, 2, 4, 13));
    std::vector<std::optional<int>> labels(17, 0);
    std::ostringstream out;
    write_bas_csv(out, r, &labels);
    std::istringstream in(out.str());
    auto back = read_bas_csv(in);
    EXPECT_EQ(back.group_ids, r.group_ids);
    EXPECT_EQ(back.bas, r.bas);
}

TEST(BasExport, UnwritablePathIsError) {
    auto r = compute_bas(random_stack(4, 1, 1, 2, 14));
    auto dir = temp_dir("blocked");
    { std::ofstream f(dir); } // a file where the directory should be
    EXPECT_THROW(export_bas_report(r, nullptr, dir), std::runtime_error);
    fs::remove_all(dir);
}
