#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "probsa/eval/attention_map.hpp"
#include "probsa/eval/metrics.hpp"
#include "probsa/eval/report.hpp"
#include "test_support.hpp"

using namespace probsa;
using namespace probsa::eval;
using fixtures::random_chain_bag;
using fixtures::small_variant;
using model::BagTransform;
using model::MilModel;
using model::Posterior;
namespace fs = std::filesystem;

namespace {

// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1;
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return wins / pairs;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("probsa_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Auroc, Examples) {
    EXPECT_EQ(auroc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
    EXPECT_EQ(auroc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0}), 0.5);
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y{0, 0, 1, 1};
    EXPECT_EQ(pairwise_auroc(s, y), 0.75);
    EXPECT_EQ(auroc(s, y), 0.75);
    EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DomainError);
    EXPECT_THROW(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ShapeError);
}

TEST(Auroc, MatchesPairEnumerationWithTies) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 40;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 7) / 7.0;  // coarse values force ties
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 1;
        y[1] = 0;
        EXPECT_NEAR(auroc(s, y), pairwise_auroc(s, y), 1e-12);
    }
}

TEST(Auroc, MonotoneInvarianceAndComplement) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 30;
        std::vector<double> s(n), t(n), neg(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = u(rng);
            t[i] = std::exp(3.0 * s[i]) + 7.0;
            neg[i] = -s[i];
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 1;
        y[1] = 0;
        EXPECT_EQ(auroc(s, y), auroc(t, y));
        EXPECT_NEAR(auroc(s, y) + auroc(neg, y), 1.0, 1e-12);
    }
}

TEST(F1, Examples) {
    EXPECT_EQ(f1(std::vector<double>{0.9, 0.2, 0.7}, std::vector<int>{1, 0, 1}), 1.0);
    EXPECT_EQ(f1(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{1, 0, 1}), 0.0);
    // TP=2, FP=1, FN=1
    EXPECT_NEAR(f1(std::vector<double>{0.9, 0.8, 0.6, 0.1, 0.2}, std::vector<int>{1, 1, 0, 1, 0}), 2.0 * 2 / (2.0 * 2 + 1 + 1), 1e-15);
    EXPECT_EQ(f1(std::vector<double>{0.5}, std::vector<int>{1}), 1.0);
    EXPECT_EQ(f1(std::vector<double>{0.5}, std::vector<int>{1}, 0.6), 0.0);
    EXPECT_THROW(f1(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 0}), DomainError);
}

TEST(RankMethods, Examples) {
    EXPECT_EQ(rank_methods({{0.9}, {0.8}}), (std::vector<double>{1, 2}));
    EXPECT_EQ(rank_methods({{0.5}, {0.5}}), (std::vector<double>{1.5, 1.5}));
    EXPECT_EQ(rank_methods({{0.9, 0.1}, {0.1, 0.9}}), (std::vector<double>{1.5, 1.5}));
    EXPECT_THROW(rank_methods({{0.9, 0.1}, {0.1}}), ShapeError);
}

TEST(RankMethods, RankSumConservation) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 8, cols = 1 + rng() % 5;
        std::vector<std::vector<double>> table(n, std::vector<double>(cols));
        for (auto& row : table)
            for (auto& v : row) v = static_cast<double>(rng() % 4);
        const auto mean = rank_methods(table);
        double total = 0.0;
        for (double m : mean) total += m * static_cast<double>(cols);
        EXPECT_NEAR(total, static_cast<double>(cols) * n * (n + 1) / 2.0, 1e-9);
    }
}

TEST(MeanStd, SampleStandardDeviation) {
    const auto ms = mean_std(std::vector<double>{1, 2, 3, 4});
    EXPECT_EQ(ms.mean, 2.5);
    EXPECT_NEAR(ms.std, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(mean_std(std::vector<double>{7}).std, 0.0);
}

TEST(Normalize, RangeConventions) {
    const auto n = minmax_normalize(std::vector<double>{2, 4, 3});
    EXPECT_EQ(n, (std::vector<double>{0, 1, 0.5}));
    EXPECT_EQ(minmax_normalize(std::vector<double>{5, 5, 5}), (std::vector<double>{0, 0, 0}));
}

TEST(AttentionMaps, DiracVarianceIsZero) {
    std::mt19937_64 rng(4);
    MilModel net(small_variant(BagTransform::TABMIL, Posterior::DiracDelta), 1);
    const auto m = attention_map(net, random_chain_bag(6, 6, rng));
    for (double v : m.var_raw) EXPECT_EQ(v, 0.0);
    for (double v : m.var_norm) EXPECT_EQ(v, 0.0);
    const auto lo = *std::min_element(m.mean_norm.begin(), m.mean_norm.end());
    const auto hi = *std::max_element(m.mean_norm.begin(), m.mean_norm.end());
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
}

TEST(AttentionMaps, ConstantMeanNormalizesToZero) {
    std::mt19937_64 rng(5);
    MilModel net(small_variant(BagTransform::ABMIL, Posterior::DiagGaussian), 1);
    for (auto& x : net.params().at(net.params().index_of("attention.mu.w")).values()) x = 0.0;
    const auto m = attention_map(net, random_chain_bag(6, 6, rng));
    for (double v : m.mean_norm) EXPECT_EQ(v, 0.0);
}

TEST(AttentionMaps, AnalyticMomentsMatchSampling) {
    std::mt19937_64 rng(6);
    MilModel net(small_variant(BagTransform::ABMIL, Posterior::DiagGaussian), 2);
    const auto bag = random_chain_bag(5, 6, rng);
    const auto m = attention_map(net, bag);
    const std::size_t draws = 100000;
    for (std::size_t i = 0; i < 5; ++i) {
        std::normal_distribution<double> z(0.0, 1.0);
        double s = 0, ss = 0;
        for (std::size_t k = 0; k < draws; ++k) {
            ad::Tape t;
            model::AttentionVars post{t.constant(ad::Tensor::vector({m.mean_raw[i]})), t.constant(ad::Tensor::vector({m.var_raw[i]}))};
            const double f = MilModel::sample_attention(post, ad::Tensor::vector({z(rng)})).value()[0];
            s += f;
            ss += f * f;
        }
        const double mean = s / draws;
        const double var = ss / draws - mean * mean;
        const double sd = std::sqrt(m.var_raw[i]);
        EXPECT_LT(std::abs(mean - m.mean_raw[i]), 3.0 * sd / std::sqrt(double(draws)));
        // standard error of the sample variance of a Gaussian: sigma^2 sqrt(2 / n)
        EXPECT_LT(std::abs(var - m.var_raw[i]), 3.0 * m.var_raw[i] * std::sqrt(2.0 / draws));
    }
}

TEST(AttentionMaps, ExportRoundTripAndHeatmaps) {
    TempDir dir("maps");
    std::mt19937_64 rng(7);
    MilModel net(small_variant(BagTransform::ABMIL, Posterior::DiagGaussian), 3);
    std::vector<data::Bag> bags{random_chain_bag(7, 6, rng, 1, "chain_a")};
    data::Bag grid = random_chain_bag(6, 6, rng, 0, "grid_b");
    grid.coords = data::Coords{6, 2, {0, 0, 0, 1, 0, 2, 1, 0, 1, 1, 1, 2}};
    bags.push_back(grid);
    const auto maps = export_attention_maps(net, bags, dir.path);
    ASSERT_EQ(maps.size(), 2u);
    for (const auto& m : maps) {
        const auto back = read_attention_csv(dir.path / (m.bag_id + ".csv"));
        EXPECT_EQ(back.mean_norm, m.mean_norm);
        EXPECT_EQ(back.var_norm, m.var_norm);
        EXPECT_EQ(back.mean_raw, m.mean_raw);
        EXPECT_EQ(back.var_raw, m.var_raw);
        EXPECT_EQ(back.coords.values, m.coords.values);
        for (const char* suffix : {"_mean.pgm", "_var.pgm"}) EXPECT_TRUE(fs::exists(dir.path / (m.bag_id + suffix)));
    }
    std::ifstream csv(dir.path / "grid_b.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "instance_index,coord0,coord1,att_mean_raw,att_var_raw,att_mean_norm,att_var_norm");
    std::ifstream chain_csv(dir.path / "chain_a.csv");
    std::getline(chain_csv, header);
    EXPECT_EQ(header, "instance_index,coord0,att_mean_raw,att_var_raw,att_mean_norm,att_var_norm");

    std::ifstream pgm(dir.path / "grid_b_mean.pgm", std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    pgm >> magic >> w >> h >> maxval;
    pgm.get();
    EXPECT_EQ(magic, "P5");
    EXPECT_EQ(w, 3);
    EXPECT_EQ(h, 2);
    EXPECT_EQ(maxval, 255);
    std::vector<unsigned char> pix(6);
    pgm.read(reinterpret_cast<char*>(pix.data()), 6);
    EXPECT_TRUE(pgm.good());
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pix[i], static_cast<unsigned char>(std::lround(maps[1].mean_norm[i] * 255.0)));
}

TEST(EvaluateBags, SeededAndScored) {
    std::mt19937_64 rng(8);
    MilModel net(small_variant(BagTransform::ABMIL, Posterior::DiagGaussian), 3);
    std::vector<data::Bag> bags;
    for (int i = 0; i < 6; ++i) bags.push_back(random_chain_bag(4 + i, 6, rng, i % 2));
    const auto a = evaluate_bags(net, bags, 8, 99);
    const auto b = evaluate_bags(net, bags, 8, 99);
    EXPECT_EQ(a.probabilities, b.probabilities);
    EXPECT_EQ(a.auroc, auroc(a.probabilities, a.labels));
    for (double p : a.probabilities) {
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
    }
}
