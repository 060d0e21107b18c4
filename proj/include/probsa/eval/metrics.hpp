#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "probsa/error.hpp"

namespace probsa::eval {

/// 1-based ranks of `values` in ascending order; ties share their average rank.
inline std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

/// Area under the ROC curve via the Mann-Whitney rank statistic; tied
/// positive/negative pairs count one half.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
    double n_pos = 0.0, n_neg = 0.0;
    for (int y : labels) (y == 1 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0.0 || n_neg == 0.0) throw DomainError("auroc: both classes must be present");
    const auto rank = average_ranks(scores);
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) pos_rank_sum += rank[i];
    }
    return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

/// F1 of the predictions `score >= threshold`; 0 when nothing is predicted positive.
inline double f1(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
    if (scores.size() != labels.size()) throw ShapeError("f1: scores and labels differ in length");
    if (std::find(labels.begin(), labels.end(), 1) == labels.end()) throw DomainError("f1: labels contain no positives");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i] == 1) ++tp;
        else if (pred) ++fp;
        else if (labels[i] == 1) ++fn;
    }
    if (tp + fp == 0) return 0.0;
    return 2.0 * tp / (2.0 * tp + fp + fn);
}

/// Mean rank of each method (row) across metric columns, higher values
/// being better; rank 1 is the best and ties share the average rank.
inline std::vector<double> rank_methods(const std::vector<std::vector<double>>& table) {
    if (table.empty()) return {};
    const std::size_t cols = table.front().size();
    for (const auto& row : table) {
        if (row.size() != cols) throw ShapeError("rank_methods: ragged table");
    }
    if (cols == 0) throw ShapeError("rank_methods: table has no columns");
    std::vector<double> mean(table.size(), 0.0);
    std::vector<double> col(table.size());
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < table.size(); ++r) col[r] = -table[r][c];
        const auto rk = average_ranks(col);
        for (std::size_t r = 0; r < table.size(); ++r) mean[r] += rk[r];
    }
    for (auto& m : mean) m /= static_cast<double>(cols);
    return mean;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
    MeanStd out;
    if (xs.empty()) return out;
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return out;
}

}  // namespace probsa::eval
