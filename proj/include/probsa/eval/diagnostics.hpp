#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "probsa/data/bag.hpp"
#include "probsa/eval/attention_map.hpp"
#include "probsa/model/mil_model.hpp"

namespace probsa::eval {

/// Normalized attention variance split by whether the instance was predicted
/// correctly. An instance is predicted positive when its bag is predicted
/// positive and its normalized attention mean is at least 0.5.
struct VarianceDiagnostic {
    std::size_t wrong = 0;
    std::size_t right = 0;
    double mean_var_wrong = 0.0;  // 0 when there are no wrong instances
    double mean_var_right = 0.0;
    std::size_t bags_skipped = 0;  // bags without instance labels
};

inline VarianceDiagnostic variance_diagnostic(const model::MilModel& net, const std::vector<data::Bag>& bags, std::size_t samples,
                                              std::uint64_t seed, double threshold = 0.5) {
    VarianceDiagnostic d;
    double sum_wrong = 0.0, sum_right = 0.0;
    for (std::size_t b = 0; b < bags.size(); ++b) {
        const auto& bag = bags[b];
        if (!bag.instance_labels) {
            ++d.bags_skipped;
            continue;
        }
        const auto ev = net.evaluate(bag);
        const bool bag_pos = net.predict(ev, samples, model::mix_seed(seed, b)) >= threshold;
        const auto mean_norm = minmax_normalize(ev.posterior.mu);
        const auto var_norm = ev.posterior.sigma2 ? minmax_normalize(*ev.posterior.sigma2) : std::vector<double>(bag.size(), 0.0);
        for (std::size_t i = 0; i < bag.size(); ++i) {
            const int pred = bag_pos && mean_norm[i] >= 0.5 ? 1 : 0;
            if (pred == (*bag.instance_labels)[i]) {
                ++d.right;
                sum_right += var_norm[i];
            } else {
                ++d.wrong;
                sum_wrong += var_norm[i];
            }
        }
    }
    if (d.wrong) d.mean_var_wrong = sum_wrong / static_cast<double>(d.wrong);
    if (d.right) d.mean_var_right = sum_right / static_cast<double>(d.right);
    return d;
}

}  // namespace probsa::eval
