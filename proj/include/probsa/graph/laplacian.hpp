#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "probsa/autodiff/ops.hpp"
#include "probsa/data/bag.hpp"
#include "probsa/error.hpp"

namespace probsa::graph {

/// Sparse graph Laplacian L = D - A in compressed-row form.
///
/// Only Laplacian-vector products are offered; nothing here builds the
/// dense matrix.
class Laplacian {
public:
    Laplacian() = default;

    explicit Laplacian(const data::AdjacencyGraph& g) : n_(g.size()), degree_(g.degree()), row_start_(g.size() + 1, 0) {
        for (const auto& e : g.edges()) {
            ++row_start_[e.i + 1];
            ++row_start_[e.j + 1];
        }
        for (std::size_t i = 0; i < n_; ++i) row_start_[i + 1] += row_start_[i];
        cols_.resize(row_start_[n_]);
        weights_.resize(row_start_[n_]);
        std::vector<std::size_t> fill(row_start_.begin(), row_start_.end() - 1);
        for (const auto& e : g.edges()) {
            cols_[fill[e.i]] = e.j;
            weights_[fill[e.i]++] = e.weight;
            cols_[fill[e.j]] = e.i;
            weights_[fill[e.j]++] = e.weight;
        }
    }

    std::size_t size() const noexcept { return n_; }
    const std::vector<double>& degree() const noexcept { return degree_; }

    /// Neighbors of row i as (column, weight) ranges.
    std::span<const std::size_t> neighbors(std::size_t i) const {
        return std::span<const std::size_t>(cols_).subspan(row_start_[i], row_start_[i + 1] - row_start_[i]);
    }
    std::span<const double> neighbor_weights(std::size_t i) const {
        return std::span<const double>(weights_).subspan(row_start_[i], row_start_[i + 1] - row_start_[i]);
    }

    /// y = L v
    std::vector<double> apply(std::span<const double> v) const {
        check_len(v.size(), "Laplacian::apply");
        std::vector<double> y(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = degree_[i] * v[i];
            for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) s -= weights_[k] * v[cols_[k]];
            y[i] = s;
        }
        return y;
    }

    /// v^T L v
    double quadratic(std::span<const double> v) const {
        const auto lv = apply(v);
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += v[i] * lv[i];
        return s;
    }

    /// Tr(L diag(s)) = sum_n D_n s_n
    double trace_diag(std::span<const double> s) const {
        check_len(s.size(), "Laplacian::trace_diag");
        double t = 0.0;
        for (std::size_t i = 0; i < n_; ++i) t += degree_[i] * s[i];
        return t;
    }

    void check_len(std::size_t len, const char* what) const {
        if (len != n_) {
            throw ShapeError(std::string(what) + ": vector of length " + std::to_string(len) + " on a graph with " +
                             std::to_string(n_) + " nodes");
        }
    }

private:
    std::size_t n_ = 0;
    std::vector<double> degree_;
    std::vector<std::size_t> row_start_;
    std::vector<std::size_t> cols_;
    std::vector<double> weights_;
};

}  // namespace probsa::graph
