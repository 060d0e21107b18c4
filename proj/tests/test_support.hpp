#pragma once

// Shared fixtures and the finite-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "probsa/autodiff/ops.hpp"
#include "probsa/data/bag.hpp"
#include "probsa/model/mil_model.hpp"

namespace probsa::fixtures {

inline constexpr double kFdStep = 1e-5;

/// |a - b| relative to the larger magnitude, with gradients below 1e-6
/// compared in absolute terms.
inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    auto t = ad::Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

/// Compares the gradients already stored in `inputs` with central
/// differences of `value`, which must recompute the loss from the current
/// contents of `inputs` without touching their gradients.
inline GradCheck finite_difference_check(std::vector<ad::Tensor*> inputs, const std::function<double()>& value,
                                         const std::vector<std::string>& names = {}) {
    GradCheck out;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& t = *inputs[k];
        const auto analytic = std::vector<double>(t.grad().begin(), t.grad().end());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double x0 = t[i];
            t[i] = x0 + kFdStep;
            const double up = value();
            t[i] = x0 - kFdStep;
            const double down = value();
            t[i] = x0;
            const double numeric = (up - down) / (2.0 * kFdStep);
            const double err = rel_error(analytic[i], numeric);
            ++out.checked;
            if (err > out.max_rel_error) {
                out.max_rel_error = err;
                out.worst = (k < names.size() ? names[k] : "input" + std::to_string(k)) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return out;
}

/// Central-difference check of every parameter of `net` for the scalar
/// built by `loss` on a fresh tape.
inline GradCheck model_gradient_check(model::MilModel& net, const std::function<ad::Var(model::BoundParams&)>& loss) {
    auto& store = net.params();
    store.zero_grad();
    {
        ad::Tape tape;
        model::BoundParams p(tape, store);
        tape.backward(loss(p));
    }
    auto value = [&]() {
        ad::Tape tape;
        model::BoundParams p(tape, static_cast<const model::ParameterStore&>(store));
        return loss(p).value().item();
    };
    std::vector<ad::Tensor*> inputs;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < store.size(); ++k) {
        inputs.push_back(&store.at(k));
        names.push_back(store.name(k));
    }
    return finite_difference_check(inputs, value, names);
}

/// Chain (c = 1) bag with random features in [-2, 2].
inline data::Bag random_chain_bag(std::size_t n, std::size_t p, std::mt19937_64& rng, int label = 1, std::string id = "bag") {
    data::Bag bag;
    bag.id = std::move(id);
    bag.features = random_tensor({n, p}, rng);
    bag.coords.count = n;
    bag.coords.dims = 1;
    for (std::size_t i = 0; i < n; ++i) bag.coords.values.push_back(static_cast<std::int32_t>(i));
    bag.label = label;
    return bag;
}

inline model::ModelVariant small_variant(model::BagTransform t, model::Posterior p, std::size_t input = 6) {
    model::ModelVariant v;
    v.transform = t;
    v.posterior = p;
    v.dims.input = input;
    v.dims.embed = 8;
    v.dims.attention = 4;
    v.dims.layers = 2;
    v.dims.heads = 2;
    v.dims.qk = 8;
    v.dims.v = 8;
    return v;
}

inline std::vector<model::ModelVariant> all_variants(std::size_t input = 6) {
    using model::BagTransform;
    using model::Posterior;
    return {small_variant(BagTransform::ABMIL, Posterior::DiracDelta, input),
            small_variant(BagTransform::ABMIL, Posterior::DiagGaussian, input),
            small_variant(BagTransform::TABMIL, Posterior::DiracDelta, input),
            small_variant(BagTransform::TABMIL, Posterior::DiagGaussian, input)};
}

}  // namespace probsa::fixtures
