#pragma once

#include <cstdint>
#include <vector>

#include "probsa/data/bag.hpp"
#include "probsa/eval/metrics.hpp"
#include "probsa/model/mil_model.hpp"

namespace probsa::eval {

struct EvalReport {
    double auroc = 0.0;
    double f1 = 0.0;
    std::vector<double> probabilities;
    std::vector<int> labels;
};

/// Bag probabilities with S posterior draws each, drawn from per-bag seeds
/// derived from `seed`, scored by AUROC and F1.
inline EvalReport evaluate_bags(const model::MilModel& net, const std::vector<const data::Bag*>& bags, std::size_t samples,
                                std::uint64_t seed, double threshold = 0.5) {
    EvalReport r;
    r.probabilities.reserve(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) {
        r.probabilities.push_back(net.predict_bag(*bags[i], samples, model::mix_seed(seed, i)));
        r.labels.push_back(bags[i]->label);
    }
    r.auroc = auroc(r.probabilities, r.labels);
    r.f1 = f1(r.probabilities, r.labels, threshold);
    return r;
}

inline EvalReport evaluate_bags(const model::MilModel& net, const std::vector<data::Bag>& bags, std::size_t samples,
                                std::uint64_t seed, double threshold = 0.5) {
    std::vector<const data::Bag*> ptrs;
    for (const auto& b : bags) ptrs.push_back(&b);
    return evaluate_bags(net, ptrs, samples, seed, threshold);
}

}  // namespace probsa::eval
