#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "probsa/autodiff/ops.hpp"
#include "probsa/data/bag.hpp"
#include "probsa/graph/prior.hpp"
#include "probsa/model/mil_model.hpp"

namespace probsa::objective {

/// Per-step loss components; total = ll + lambda * kl.
struct LossBreakdown {
    double total = 0.0;
    double ll = 0.0;
    double kl = 0.0;
    double lambda = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o) {
        total += o.total;
        ll += o.ll;
        kl += o.kl;
        return *this;
    }
};

struct BagLoss {
    ad::Var total;
    LossBreakdown values;
};

/// Loss of one bag, L_LL + lambda * L_KL.
///
/// Gaussian posterior: the likelihood term averages the BCE over the draws
/// mu + sqrt(sigma2) * noise, one per entry of `noises`, and the KL term is
/// kl_gaussian_prior. Dirac posterior: the likelihood is evaluated at mu,
/// noise is ignored and the KL term is the Dirichlet energy of mu.
/// `positive_weight` scales the likelihood term of positive bags only.
inline BagLoss bag_loss(model::BoundParams& p, const model::MilModel& net, const data::Bag& bag, const graph::Laplacian& lap,
                        double lambda, std::span<const ad::Tensor> noises, double positive_weight = 1.0) {
    if (noises.empty()) throw DomainError("bag_loss: at least one noise draw is required");
    auto& tape = p.tape();
    auto X = tape.constant(ad::Tensor(bag.features.shape(), bag.features.data()));
    auto H = net.embed(p, X);
    auto post = net.attention_heads(p, H);
    const std::size_t draws = post.sigma2 ? noises.size() : 1;
    auto draw_nll = [&](const ad::Tensor& noise) {
        auto f = model::MilModel::sample_attention(post, noise);
        return ad::reshape(ad::bce_with_logits(net.pool_logit(p, H, f), static_cast<double>(bag.label)), {});
    };
    auto nll = draw_nll(noises[0]);
    for (std::size_t s = 1; s < draws; ++s) nll = ad::add(nll, draw_nll(noises[s]));
    if (draws > 1) nll = ad::scale(nll, 1.0 / static_cast<double>(draws));
    if (bag.label == 1 && positive_weight != 1.0) nll = ad::scale(nll, positive_weight);
    auto kl = post.sigma2 ? graph::kl_gaussian_prior(post.mu, *post.sigma2, lap) : graph::dirichlet_energy(post.mu, lap);
    auto total = ad::add(nll, ad::scale(kl, lambda));
    return {total, LossBreakdown{total.value().item(), nll.value().item(), kl.value().item(), lambda}};
}

inline BagLoss bag_loss(model::BoundParams& p, const model::MilModel& net, const data::Bag& bag, const graph::Laplacian& lap,
                        double lambda, const ad::Tensor& noise, double positive_weight = 1.0) {
    return bag_loss(p, net, bag, lap, lambda, std::span<const ad::Tensor>(&noise, 1), positive_weight);
}

struct BatchItem {
    const data::Bag* bag;
    const graph::Laplacian* laplacian;
    ad::Tensor noise;
    std::vector<ad::Tensor> extra_noise = {};  // further likelihood draws for the Gaussian posterior
};

/// Zeroes the gradients, then runs forward/backward for each bag in turn so
/// the parameter gradients end up holding the sum over the batch.
inline LossBreakdown accumulate_batch(model::MilModel& net, const std::vector<BatchItem>& batch, double lambda,
                                      double positive_weight = 1.0) {
    if (batch.empty()) throw DomainError("accumulate_batch: empty batch");
    net.params().zero_grad();
    LossBreakdown sum;
    sum.lambda = lambda;
    for (const auto& item : batch) {
        ad::Tape tape;
        model::BoundParams p(tape, net.params());
        std::vector<ad::Tensor> noises{item.noise};
        noises.insert(noises.end(), item.extra_noise.begin(), item.extra_noise.end());
        auto loss = bag_loss(p, net, *item.bag, *item.laplacian, lambda, noises, positive_weight);
        tape.backward(loss.total);
        sum += loss.values;
    }
    return sum;
}

}  // namespace probsa::objective
