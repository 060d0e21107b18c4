#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "probsa/data/bag.hpp"
#include "probsa/error.hpp"

namespace probsa::data {

/// Bags grouped by split.
struct Dataset {
    std::vector<Bag> train;
    std::vector<Bag> val;
    std::vector<Bag> test;
};

/// Parameters of the synthetic bag generator.
///
/// Instances are drawn from one of two isotropic Gaussians. Negative
/// instances have mean `negative_mean` in every dimension; positive instances
/// shift the first `informative_dims` dimensions to `positive_mean`. A
/// positive bag holds one contiguous positive region: a run of
/// `region_min..region_max` instances on a chain, or a rectangle with sides
/// in that range on a grid.
struct SynthSpec {
    std::size_t n_train = 200;
    std::size_t n_val = 50;
    std::size_t n_test = 100;
    std::size_t min_instances = 20;
    std::size_t max_instances = 40;
    std::size_t feature_dim = 32;
    std::size_t informative_dims = 32;
    double positive_fraction = 0.5;
    std::size_t region_min = 3;
    std::size_t region_max = 8;
    double negative_mean = 0.0;
    double positive_mean = 0.35;
    double stddev = 1.0;
    Geometry geometry = Geometry::Chain;
};

/// Instance labels of a chain of `n` with the run [start, start + size) positive.
inline std::vector<int> chain_region_labels(std::size_t n, std::size_t start, std::size_t size) {
    if (size > n || start + size > n) throw DataError("positive region does not fit in a chain of " + std::to_string(n));
    std::vector<int> y(n, 0);
    std::fill(y.begin() + static_cast<std::ptrdiff_t>(start), y.begin() + static_cast<std::ptrdiff_t>(start + size), 1);
    return y;
}

inline void validate(const SynthSpec& spec) {
    if (spec.min_instances < 1 || spec.min_instances > spec.max_instances) throw DataError("synthetic: bad instance-count range");
    if (spec.feature_dim < 1) throw DataError("synthetic: feature_dim must be >= 1");
    if (spec.informative_dims > spec.feature_dim) throw DataError("synthetic: informative_dims exceeds feature_dim");
    if (!(spec.positive_fraction >= 0.0 && spec.positive_fraction <= 1.0)) throw DataError("synthetic: positive_fraction outside [0,1]");
    if (spec.region_min < 1 || spec.region_min > spec.region_max) throw DataError("synthetic: bad region size range");
    if (!(spec.stddev > 0.0)) throw DataError("synthetic: stddev must be positive");
    if (spec.geometry == Geometry::Chain) {
        if (spec.region_max > spec.min_instances) {
            throw DataError("synthetic: positive region size " + std::to_string(spec.region_max) +
                            " exceeds the smallest bag size " + std::to_string(spec.min_instances));
        }
    } else {
        const auto min_side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.min_instances))));
        const auto max_side = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(spec.max_instances))));
        if (min_side > max_side) throw DataError("synthetic: no square-ish grid fits the instance-count range");
        if (spec.region_max > min_side) {
            throw DataError("synthetic: positive rectangle side " + std::to_string(spec.region_max) +
                            " exceeds the smallest grid side " + std::to_string(min_side));
        }
    }
}

namespace detail {

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Bag make_bag(const SynthSpec& spec, std::mt19937_64& rng, std::string id, bool positive) {
    Bag bag;
    bag.id = std::move(id);
    std::vector<int> y;
    if (spec.geometry == Geometry::Chain) {
        const auto n = uniform_index(rng, spec.min_instances, spec.max_instances);
        bag.coords.count = n;
        bag.coords.dims = 1;
        for (std::size_t i = 0; i < n; ++i) bag.coords.values.push_back(static_cast<std::int32_t>(i));
        if (positive) {
            const auto size = uniform_index(rng, spec.region_min, spec.region_max);
            const auto start = uniform_index(rng, 0, n - size);
            y = chain_region_labels(n, start, size);
        } else {
            y.assign(n, 0);
        }
    } else {
        const auto lo = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.min_instances))));
        const auto hi = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(spec.max_instances))));
        const auto rows = uniform_index(rng, lo, hi);
        const auto cols = uniform_index(rng, lo, hi);
        const auto n = rows * cols;
        bag.coords.count = n;
        bag.coords.dims = 2;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                bag.coords.values.push_back(static_cast<std::int32_t>(r));
                bag.coords.values.push_back(static_cast<std::int32_t>(c));
            }
        }
        y.assign(n, 0);
        if (positive) {
            const auto h = uniform_index(rng, spec.region_min, spec.region_max);
            const auto w = uniform_index(rng, spec.region_min, spec.region_max);
            const auto r0 = uniform_index(rng, 0, rows - h);
            const auto c0 = uniform_index(rng, 0, cols - w);
            for (std::size_t r = r0; r < r0 + h; ++r)
                for (std::size_t c = c0; c < c0 + w; ++c) y[r * cols + c] = 1;
        }
    }

    const auto n = y.size();
    const auto p = spec.feature_dim;
    std::normal_distribution<double> noise(0.0, spec.stddev);
    std::vector<double> x(n * p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < p; ++k) {
            const double mean = (y[i] == 1 && k < spec.informative_dims) ? spec.positive_mean : spec.negative_mean;
            // Rounded through float32 so a dataset written to disk reloads identically.
            x[i * p + k] = static_cast<double>(static_cast<float>(mean + noise(rng)));
        }
    }
    bag.features = ad::Tensor::matrix(n, p, std::move(x));
    bag.label = positive ? 1 : 0;
    bag.instance_labels = std::move(y);
    return bag;
}

inline std::vector<Bag> make_split(const SynthSpec& spec, std::mt19937_64& rng, const char* tag, std::size_t count) {
    // Exact positive count per split; order shuffled.
    const auto n_pos = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(count)));
    std::vector<bool> is_pos(count, false);
    std::fill(is_pos.begin(), is_pos.begin() + static_cast<std::ptrdiff_t>(n_pos), true);
    std::shuffle(is_pos.begin(), is_pos.end(), rng);
    std::vector<Bag> bags;
    bags.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%04zu", tag, b);
        bags.push_back(make_bag(spec, rng, id, is_pos[b]));
    }
    return bags;
}

}  // namespace detail

/// Seed-deterministic synthetic dataset with contiguous positive regions.
inline Dataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    validate(spec);
    std::mt19937_64 rng(seed);
    Dataset ds;
    ds.train = detail::make_split(spec, rng, "train", spec.n_train);
    ds.val = detail::make_split(spec, rng, "val", spec.n_val);
    ds.test = detail::make_split(spec, rng, "test", spec.n_test);
    return ds;
}

}  // namespace probsa::data
