#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "probsa/autodiff/ops.hpp"
#include "probsa/data/bag.hpp"
#include "probsa/model/parameters.hpp"
#include "probsa/model/variant.hpp"

namespace probsa::model {

/// Lower bound added to every predicted attention variance.
inline constexpr double kVarianceFloor = 1e-6;

/// Variational attention posterior of one bag.
struct AttentionPosterior {
    std::vector<double> mu;
    std::optional<std::vector<double>> sigma2;  // absent for the Dirac posterior
};

/// Recorded attention posterior.
struct AttentionVars {
    ad::Var mu;
    std::optional<ad::Var> sigma2;
};

/// softplus(raw) + floor
inline double variance_from_raw(double raw) { return ad::softplus_value(raw) + kVarianceFloor; }

/// Bag probability clamped to the open interval (0, 1).
inline double clamp_probability(double p) {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    return std::clamp(p, lo, hi);
}

/// splitmix64 step, used to derive independent per-bag seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Standard-normal noise vector of length n.
inline ad::Tensor standard_normal(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    auto t = ad::Tensor::zeros({n});
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

/// One of the four attention-MIL variants with its parameters.
///
/// Forward pieces are exposed separately so tests and the loss can reach the
/// intermediate values: embed -> attention_heads -> sample_attention ->
/// pool_logit.
class MilModel {
public:
    MilModel(ModelVariant variant, std::uint64_t seed) : variant_(variant) {
        validate(variant_);
        std::mt19937_64 rng(seed);
        const auto& d = variant_.dims;
        ids_.embed_w = params_.add("embed.weight", uniform_init({d.input, d.embed}, d.input, rng));
        ids_.embed_b = params_.add("embed.bias", uniform_init({d.embed}, d.input, rng));
        if (variant_.transform == BagTransform::TABMIL) {
            for (std::size_t l = 0; l < d.layers; ++l) {
                const auto p = "encoder." + std::to_string(l) + ".";
                Layer L;
                L.ln1_g = params_.add(p + "ln1.gain", ad::Tensor::filled({d.embed}, 1.0));
                L.ln1_b = params_.add(p + "ln1.bias", ad::Tensor::zeros({d.embed}));
                L.q_w = params_.add(p + "attn.q.weight", uniform_init({d.embed, d.qk}, d.embed, rng));
                L.q_b = params_.add(p + "attn.q.bias", uniform_init({d.qk}, d.embed, rng));
                L.k_w = params_.add(p + "attn.k.weight", uniform_init({d.embed, d.qk}, d.embed, rng));
                L.k_b = params_.add(p + "attn.k.bias", uniform_init({d.qk}, d.embed, rng));
                L.v_w = params_.add(p + "attn.v.weight", uniform_init({d.embed, d.v}, d.embed, rng));
                L.v_b = params_.add(p + "attn.v.bias", uniform_init({d.v}, d.embed, rng));
                L.o_w = params_.add(p + "attn.out.weight", uniform_init({d.v, d.embed}, d.v, rng));
                L.o_b = params_.add(p + "attn.out.bias", uniform_init({d.embed}, d.v, rng));
                L.ln2_g = params_.add(p + "ln2.gain", ad::Tensor::filled({d.embed}, 1.0));
                L.ln2_b = params_.add(p + "ln2.bias", ad::Tensor::zeros({d.embed}));
                L.fc1_w = params_.add(p + "mlp.fc1.weight", uniform_init({d.embed, d.v}, d.embed, rng));
                L.fc1_b = params_.add(p + "mlp.fc1.bias", uniform_init({d.v}, d.embed, rng));
                L.fc2_w = params_.add(p + "mlp.fc2.weight", uniform_init({d.v, d.embed}, d.v, rng));
                L.fc2_b = params_.add(p + "mlp.fc2.bias", uniform_init({d.embed}, d.v, rng));
                ids_.layers.push_back(L);
            }
        }
        ids_.mu_W = params_.add("attention.mu.W", uniform_init({d.embed, d.attention}, d.embed, rng));
        ids_.mu_w = params_.add("attention.mu.w", uniform_init({d.attention, 1}, d.attention, rng));
        if (variant_.posterior == Posterior::DiagGaussian) {
            ids_.sigma_W = params_.add("attention.sigma.W", uniform_init({d.embed, d.attention}, d.embed, rng));
            ids_.sigma_w = params_.add("attention.sigma.w", uniform_init({d.attention, 1}, d.attention, rng));
        }
        ids_.cls_w = params_.add("classifier.weight", uniform_init({d.embed, 1}, d.embed, rng));
        ids_.cls_b = params_.add("classifier.bias", uniform_init({1}, d.embed, rng));
    }

    const ModelVariant& variant() const noexcept { return variant_; }
    ParameterStore& params() noexcept { return params_; }
    const ParameterStore& params() const noexcept { return params_; }

    /// Bag transform H(X): ReLU(X W + b), then the encoder for T-ABMIL.
    ad::Var embed(BoundParams& p, const ad::Var& X) const {
        if (X.value().rank() != 2 || X.value().cols() != variant_.dims.input) {
            throw ShapeError("embed: expected N x " + std::to_string(variant_.dims.input) + " features, got " +
                             ad::shape_str(X.shape()));
        }
        auto h = ad::relu(ad::add_row(ad::matmul(X, p[ids_.embed_w]), p[ids_.embed_b]));
        if (variant_.transform == BagTransform::TABMIL) h = transformer_encode(p, h);
        return h;
    }

    /// Pre-norm encoder: Z = Y + SelfAttention(LN(Y)); Y' = Z + MLP(LN(Z)).
    ad::Var transformer_encode(BoundParams& p, ad::Var y) const {
        const auto& d = variant_.dims;
        const std::size_t hq = d.qk / d.heads;
        const std::size_t hv = d.v / d.heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hq));
        for (const auto& L : ids_.layers) {
            auto xn = ad::layer_norm(y, p[L.ln1_g], p[L.ln1_b]);
            auto q = ad::add_row(ad::matmul(xn, p[L.q_w]), p[L.q_b]);
            auto k = ad::add_row(ad::matmul(xn, p[L.k_w]), p[L.k_b]);
            auto v = ad::add_row(ad::matmul(xn, p[L.v_w]), p[L.v_b]);
            std::vector<ad::Var> heads;
            heads.reserve(d.heads);
            for (std::size_t h = 0; h < d.heads; ++h) {
                auto qh = ad::slice_cols(q, h * hq, (h + 1) * hq);
                auto kh = ad::slice_cols(k, h * hq, (h + 1) * hq);
                auto vh = ad::slice_cols(v, h * hv, (h + 1) * hv);
                auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
                heads.push_back(ad::matmul(ad::softmax_rows(scores), vh));
            }
            auto attn = ad::add_row(ad::matmul(ad::concat_cols(heads), p[L.o_w]), p[L.o_b]);
            auto z = ad::add(y, attn);
            auto zn = ad::layer_norm(z, p[L.ln2_g], p[L.ln2_b]);
            auto hidden = ad::tanh(ad::add_row(ad::matmul(zn, p[L.fc1_w]), p[L.fc1_b]));
            auto mlp = ad::add_row(ad::matmul(hidden, p[L.fc2_w]), p[L.fc2_b]);
            y = ad::add(z, mlp);
        }
        return y;
    }

    /// mu_n = w^T tanh(W h_n); sigma2_n = softplus(w_s^T tanh(W_s h_n)) + floor.
    AttentionVars attention_heads(BoundParams& p, const ad::Var& H) const {
        const std::size_t n = H.value().rows();
        AttentionVars out;
        out.mu = ad::reshape(ad::matmul(ad::tanh(ad::matmul(H, p[ids_.mu_W])), p[ids_.mu_w]), {n});
        if (variant_.posterior == Posterior::DiagGaussian) {
            auto raw = ad::reshape(ad::matmul(ad::tanh(ad::matmul(H, p[ids_.sigma_W])), p[ids_.sigma_w]), {n});
            out.sigma2 = ad::add_scalar(ad::softplus(raw), kVarianceFloor);
        }
        return out;
    }

    /// Reparameterized draw f = mu + sqrt(sigma2) * noise; the Dirac posterior returns mu.
    static ad::Var sample_attention(const AttentionVars& post, const ad::Tensor& noise) {
        if (!post.sigma2) return post.mu;
        if (noise.size() != post.mu.value().size()) throw ShapeError("sample_attention: noise length mismatch");
        auto eps = post.mu.tape().constant(ad::Tensor(post.mu.shape(), noise.data()));
        return ad::add(post.mu, ad::mul(ad::sqrt(*post.sigma2), eps));
    }

    /// Classifier logit of the pooled bag representation z = H^T softmax(f).
    ad::Var pool_logit(BoundParams& p, const ad::Var& H, const ad::Var& f) const {
        const std::size_t n = H.value().rows();
        if (f.value().size() != n) throw ShapeError("pool: attention length does not match bag size");
        auto a = ad::reshape(ad::softmax(f), {1, n});
        auto z = ad::matmul(a, H);  // [1 x D] == (H^T a)^T
        return ad::reshape(ad::add_row(ad::matmul(z, p[ids_.cls_w]), p[ids_.cls_b]), {1});
    }

    ad::Var pool_and_classify(BoundParams& p, const ad::Var& H, const ad::Var& f) const {
        return ad::sigmoid(pool_logit(p, H, f));
    }

    /// Deterministic part of a forward pass, evaluated without gradient tracking.
    struct Evaluation {
        ad::Tensor H;
        AttentionPosterior posterior;
    };

    Evaluation evaluate(const data::Bag& bag) const {
        ad::Tape tape;
        BoundParams p(tape, params_);
        auto H = embed(p, tape.constant(ad::Tensor(bag.features.shape(), bag.features.data())));
        auto post = attention_heads(p, H);
        Evaluation ev{ad::Tensor(H.shape(), H.value().data()), {post.mu.value().data(), std::nullopt}};
        if (post.sigma2) ev.posterior.sigma2 = post.sigma2->value().data();
        return ev;
    }

    /// Plain-value pool-and-classify over a precomputed H; equals pool_and_classify.
    double pool_probability(const ad::Tensor& H, std::span<const double> f) const {
        const std::size_t n = H.rows(), dim = H.cols();
        double mx = f[0];
        for (double v : f) mx = std::max(mx, v);
        std::vector<double> a(n);
        double zsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = std::exp(f[i] - mx);
            zsum += a[i];
        }
        const auto& w = params_.at(ids_.cls_w);
        double logit = params_.at(ids_.cls_b)[0];
        for (std::size_t j = 0; j < dim; ++j) {
            double zj = 0.0;
            for (std::size_t i = 0; i < n; ++i) zj += a[i] * H[i * dim + j];
            logit += (zj / zsum) * w[j];
        }
        return clamp_probability(ad::sigmoid_value(logit));
    }

    /// Monte-Carlo bag probability from S posterior draws; the Dirac posterior
    /// evaluates once. `sample_probs` receives every per-draw probability when given.
    double predict(const Evaluation& ev, std::size_t samples, std::uint64_t seed,
                   std::vector<double>* sample_probs = nullptr) const {
        if (samples == 0) throw DomainError("predict: sample count must be >= 1");
        const auto& post = ev.posterior;
        if (!post.sigma2) {
            const double p = pool_probability(ev.H, post.mu);
            if (sample_probs) sample_probs->assign(1, p);
            return p;
        }
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const std::size_t n = post.mu.size();
        std::vector<double> sd(n), f(n);
        for (std::size_t i = 0; i < n; ++i) sd[i] = std::sqrt((*post.sigma2)[i]);
        if (sample_probs) {
            sample_probs->clear();
            sample_probs->reserve(samples);
        }
        double acc = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            for (std::size_t i = 0; i < n; ++i) f[i] = post.mu[i] + sd[i] * normal(rng);
            const double p = pool_probability(ev.H, f);
            if (sample_probs) sample_probs->push_back(p);
            acc += p;
        }
        return clamp_probability(acc / static_cast<double>(samples));
    }

    double predict_bag(const data::Bag& bag, std::size_t samples, std::uint64_t seed) const {
        return predict(evaluate(bag), samples, seed);
    }

private:
    struct Layer {
        std::size_t ln1_g, ln1_b, q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };
    struct Ids {
        std::size_t embed_w = 0, embed_b = 0;
        std::vector<Layer> layers;
        std::size_t mu_W = 0, mu_w = 0, sigma_W = 0, sigma_w = 0;
        std::size_t cls_w = 0, cls_b = 0;
    };

    ModelVariant variant_;
    ParameterStore params_;
    Ids ids_;
};

}  // namespace probsa::model
