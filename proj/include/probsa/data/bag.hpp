#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "probsa/autodiff/tensor.hpp"
#include "probsa/error.hpp"

namespace probsa::data {

/// Integer instance coordinates, `count x dims` row-major.
struct Coords {
    std::size_t count = 0;
    std::size_t dims = 1;
    std::vector<std::int32_t> values;

    std::int32_t at(std::size_t i, std::size_t d) const { return values[i * dims + d]; }
};

/// A bag of instances sharing one binary label.
struct Bag {
    std::string id;
    ad::Tensor features;  // N x P
    Coords coords;        // N x c
    int label = 0;
    std::optional<std::vector<int>> instance_labels;  // evaluation only

    std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
    std::size_t feature_dim() const { return features.rank() == 2 ? features.cols() : 0; }
};

/// Throws DataError unless the bag satisfies its structural invariants.
inline void validate(const Bag& bag) {
    if (bag.features.rank() != 2 || bag.features.rows() == 0) {
        throw DataError("bag '" + bag.id + "': features must be a non-empty N x P matrix");
    }
    if (!bag.features.all_finite()) throw DataError("bag '" + bag.id + "': non-finite feature values");
    const auto n = bag.size();
    if (bag.coords.count != n || bag.coords.values.size() != n * bag.coords.dims) {
        throw DataError("bag '" + bag.id + "': coords count does not match instance count");
    }
    if (bag.label != 0 && bag.label != 1) throw DataError("bag '" + bag.id + "': label must be 0 or 1");
    std::set<std::vector<std::int32_t>> seen;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::int32_t> row(bag.coords.values.begin() + static_cast<std::ptrdiff_t>(i * bag.coords.dims),
                                      bag.coords.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * bag.coords.dims));
        if (!seen.insert(std::move(row)).second) throw DataError("bag '" + bag.id + "': duplicate coordinates");
    }
    if (bag.instance_labels) {
        const auto& y = *bag.instance_labels;
        if (y.size() != n) throw DataError("bag '" + bag.id + "': instance label count mismatch");
        const int mx = *std::max_element(y.begin(), y.end());
        if (mx != bag.label) throw DataError("bag '" + bag.id + "': bag label differs from max instance label");
    }
}

struct Edge {
    std::size_t i;
    std::size_t j;
    double weight;
};

/// Sparse symmetric weighted adjacency without self-loops.
///
/// Each stored edge (i < j) stands for both A_ij and A_ji.
class AdjacencyGraph {
public:
    AdjacencyGraph() = default;

    AdjacencyGraph(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)), degree_(n, 0.0) {
        for (auto& e : edges_) {
            if (e.i == e.j) throw DataError("adjacency: self-loop at node " + std::to_string(e.i));
            if (e.i > e.j) std::swap(e.i, e.j);
            if (e.j >= n_) throw DataError("adjacency: edge endpoint out of range");
            if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw DataError("adjacency: weights must be positive and finite");
        }
        std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
            return a.i != b.i ? a.i < b.i : a.j < b.j;
        });
        for (std::size_t k = 1; k < edges_.size(); ++k) {
            if (edges_[k].i == edges_[k - 1].i && edges_[k].j == edges_[k - 1].j) throw DataError("adjacency: duplicate edge");
        }
        for (const auto& e : edges_) {
            degree_[e.i] += e.weight;
            degree_[e.j] += e.weight;
        }
    }

    std::size_t size() const noexcept { return n_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::vector<double>& degree() const noexcept { return degree_; }

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::vector<double> degree_;
};

enum class Geometry { Chain, Grid };

struct NeighborPolicy {
    Geometry geometry = Geometry::Chain;
    /// Grid only: 8-neighborhood (Chebyshev distance 1) when true, 4-neighborhood otherwise.
    bool eight_connected = true;
};

inline double feature_distance(const ad::Tensor& features, std::size_t a, std::size_t b) {
    const auto ra = features.row(a);
    const auto rb = features.row(b);
    double s = 0.0;
    for (std::size_t k = 0; k < ra.size(); ++k) {
        const double d = ra[k] - rb[k];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Spatial neighborhood graph weighted by 1 / (1 + ||x_i - x_j||) on the raw feature rows.
inline AdjacencyGraph build_adjacency(const Bag& bag, const NeighborPolicy& policy) {
    const std::size_t want = policy.geometry == Geometry::Chain ? 1 : 2;
    if (bag.coords.dims != want) {
        throw DataError("bag '" + bag.id + "': coords have " + std::to_string(bag.coords.dims) +
                        " dims but policy needs " + std::to_string(want));
    }
    const std::size_t n = bag.size();
    if (bag.coords.count != n) throw DataError("bag '" + bag.id + "': coords count does not match instance count");

    std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> index;
    auto key = [&](std::size_t i) {
        return std::pair<std::int64_t, std::int64_t>{bag.coords.at(i, 0), want == 2 ? bag.coords.at(i, 1) : 0};
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (!index.emplace(key(i), i).second) throw DataError("bag '" + bag.id + "': duplicate coordinates");
    }

    // Forward half of the neighborhood so each unordered pair is visited once.
    std::vector<std::pair<std::int64_t, std::int64_t>> offsets;
    if (policy.geometry == Geometry::Chain) {
        offsets = {{1, 0}};
    } else if (policy.eight_connected) {
        offsets = {{0, 1}, {1, -1}, {1, 0}, {1, 1}};
    } else {
        offsets = {{0, 1}, {1, 0}};
    }

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [r, c] = key(i);
        for (const auto& [dr, dc] : offsets) {
            const auto it = index.find({r + dr, c + dc});
            if (it == index.end()) continue;
            const std::size_t j = it->second;
            edges.push_back({std::min(i, j), std::max(i, j), 1.0 / (1.0 + feature_distance(bag.features, i, j))});
        }
    }
    return AdjacencyGraph(n, std::move(edges));
}

}  // namespace probsa::data
