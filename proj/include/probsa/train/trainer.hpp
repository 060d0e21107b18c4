#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "probsa/data/bag.hpp"
#include "probsa/eval/report.hpp"
#include "probsa/graph/laplacian.hpp"
#include "probsa/model/mil_model.hpp"
#include "probsa/objective/lambda_policy.hpp"
#include "probsa/objective/loss.hpp"
#include "probsa/train/adam.hpp"

namespace probsa::train {

struct Warmup {
    double start_factor = 0.1;
    std::size_t total_iters = 10;
};

/// How positive-bag likelihood terms are reweighted.
struct PositiveWeight {
    enum class Mode { None, Auto, Fixed };
    Mode mode = Mode::Auto;  // Auto: #negative / #positive training bags
    double value = 1.0;
};

struct TrainConfig {
    std::size_t epochs = 100;
    double base_lr = 1e-4;
    Warmup warmup;
    std::size_t batch_size = 8;
    objective::LambdaPolicy lambda = objective::LambdaPolicy::cyclical(1);
    PositiveWeight positive_weight;
    std::size_t samples_train = 1;  // posterior draws per bag in the likelihood term
    std::size_t samples_predict = 16;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    std::uint64_t eval_seed = 12345;
};

inline void validate(const TrainConfig& c) {
    if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(c.base_lr > 0.0)) throw ConfigError("train: base_lr must be positive");
    if (!(c.warmup.start_factor > 0.0 && c.warmup.start_factor <= 1.0)) throw ConfigError("train: warmup start_factor must lie in (0, 1]");
    if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (c.samples_train < 1) throw ConfigError("train: samples_train must be >= 1");
    if (c.samples_predict < 1) throw ConfigError("train: samples_predict must be >= 1");
}

/// Linear warmup from start_factor * base_lr to base_lr over total_iters epochs.
inline double lr_at(const TrainConfig& c, std::size_t epoch) {
    if (c.warmup.total_iters == 0) return c.base_lr;
    const double frac = static_cast<double>(std::min(epoch, c.warmup.total_iters)) / static_cast<double>(c.warmup.total_iters);
    return c.base_lr * (c.warmup.start_factor + (1.0 - c.warmup.start_factor) * frac);
}

/// A bag with its fixed neighborhood graph.
struct GraphBag {
    data::Bag bag;
    data::AdjacencyGraph graph;
    graph::Laplacian laplacian;
};

inline std::vector<GraphBag> prepare(const std::vector<data::Bag>& bags, const data::NeighborPolicy& policy) {
    std::vector<GraphBag> out;
    out.reserve(bags.size());
    for (const auto& b : bags) {
        auto g = data::build_adjacency(b, policy);
        graph::Laplacian lap(g);
        out.push_back({b, std::move(g), std::move(lap)});
    }
    return out;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // mean total loss per training bag
    double val_auroc = 0.0;
    double val_f1 = 0.0;
    bool selected = false;
};

struct StepRecord {
    std::size_t step = 0;
    objective::LossBreakdown loss;
};

struct FitResult {
    std::size_t best_epoch = 0;
    double best_val_auroc = 0.0;
    std::vector<ad::Tensor> best_params;
    std::vector<EpochRecord> history;
    std::vector<StepRecord> steps;
};

/// Index of the maximum, the earliest one on ties.
inline std::size_t select_best(const std::vector<double>& scores) {
    if (scores.empty()) throw DomainError("select_best: empty history");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

inline double resolve_positive_weight(const PositiveWeight& pw, const std::vector<GraphBag>& train) {
    switch (pw.mode) {
        case PositiveWeight::Mode::None: return 1.0;
        case PositiveWeight::Mode::Fixed: return pw.value;
        case PositiveWeight::Mode::Auto: break;
    }
    double pos = 0, neg = 0;
    for (const auto& gb : train) (gb.bag.label == 1 ? pos : neg) += 1;
    return pos > 0 && neg > 0 ? neg / pos : 1.0;
}

/// Adam training with per-epoch validation; the model ends holding the
/// weights of the epoch with the highest validation AUROC.
inline FitResult fit(const std::vector<GraphBag>& train, const std::vector<GraphBag>& val, model::MilModel& net,
                     const TrainConfig& config) {
    validate(config);
    if (train.empty() || val.empty()) throw DataError("fit: train and validation splits must be non-empty");
    {
        int pos = 0;
        for (const auto& gb : val) pos += gb.bag.label;
        if (pos == 0 || pos == static_cast<int>(val.size())) throw DataError("fit: validation split needs both classes");
    }

    const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
    auto policy = config.lambda;
    policy.total_steps = config.epochs * steps_per_epoch;
    objective::validate(policy);
    const double pos_weight = resolve_positive_weight(config.positive_weight, train);
    const bool gaussian = net.variant().posterior == model::Posterior::DiagGaussian;

    std::vector<const data::Bag*> val_bags;
    for (const auto& gb : val) val_bags.push_back(&gb.bag);

    std::mt19937_64 rng(config.seed);
    AdamState adam(net.params());
    FitResult result;
    std::vector<double> aurocs;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        try {
            const double lr = lr_at(config, epoch);
            std::shuffle(order.begin(), order.end(), rng);
            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
                const double lambda = objective::lambda_at(policy, step);
                std::vector<objective::BatchItem> batch;
                for (std::size_t k = start; k < std::min(start + config.batch_size, order.size()); ++k) {
                    const auto& gb = train[order[k]];
                    batch.push_back({&gb.bag, &gb.laplacian,
                                     gaussian ? model::standard_normal(gb.bag.size(), rng) : ad::Tensor::zeros({gb.bag.size()})});
                    if (gaussian) {
                        for (std::size_t s = 1; s < config.samples_train; ++s) {
                            batch.back().extra_noise.push_back(model::standard_normal(gb.bag.size(), rng));
                        }
                    }
                }
                const auto loss = objective::accumulate_batch(net, batch, lambda, pos_weight);
                for (const auto& e : net.params().entries()) {
                    for (double g : e.value.grad()) {
                        if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + e.name);
                    }
                }
                adam_step(net.params(), adam, lr);
                result.steps.push_back({step, loss});
                epoch_loss += loss.total;
            }
            const auto report = eval::evaluate_bags(net, val_bags, config.samples_predict, config.eval_seed, config.threshold);
            result.history.push_back({epoch, lr, epoch_loss / static_cast<double>(train.size()), report.auroc, report.f1, false});
            aurocs.push_back(report.auroc);
            if (aurocs.size() == 1 || report.auroc > result.best_val_auroc) {
                result.best_val_auroc = report.auroc;
                result.best_epoch = epoch;
                result.best_params = net.params().snapshot();
            }
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }
    result.best_epoch = select_best(aurocs);
    result.history[result.best_epoch].selected = true;
    net.params().restore(result.best_params);
    return result;
}

}  // namespace probsa::train
