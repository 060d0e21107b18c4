#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "probsa/model/parameters.hpp"

namespace probsa::train {

/// Moment buffers for Adam with bias correction.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    AdamState() = default;
    explicit AdamState(const model::ParameterStore& store) {
        for (const auto& e : store.entries()) {
            m.emplace_back(e.value.size(), 0.0);
            v.emplace_back(e.value.size(), 0.0);
        }
    }
};

/// One Adam update of every parameter from its accumulated gradient.
inline void adam_step(model::ParameterStore& store, AdamState& state, double lr) {
    if (state.m.size() != store.size()) throw ShapeError("adam_step: optimizer state does not match the parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < store.size(); ++k) {
        auto& param = store.at(k);
        auto& m = state.m[k];
        auto& v = state.v[k];
        const auto g = param.grad();
        if (m.size() != param.size() || g.size() != param.size()) {
            throw ShapeError("adam_step: shape mismatch for " + store.name(k));
        }
        auto x = param.values();
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            x[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace probsa::train
