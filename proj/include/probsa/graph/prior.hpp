#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "probsa/autodiff/ops.hpp"
#include "probsa/data/bag.hpp"
#include "probsa/error.hpp"
#include "probsa/graph/laplacian.hpp"

namespace probsa::graph {

/// Dirichlet energy as the edge sum 1/2 sum_ij A_ij (f_i - f_j)^2.
inline double dirichlet_energy(std::span<const double> f, const data::AdjacencyGraph& g) {
    if (f.size() != g.size()) {
        throw ShapeError("dirichlet_energy: length " + std::to_string(f.size()) + " vs " + std::to_string(g.size()) + " nodes");
    }
    double e = 0.0;
    for (const auto& edge : g.edges()) {
        const double d = f[edge.i] - f[edge.j];
        e += edge.weight * d * d;  // both (i,j) and (j,i) halves
    }
    return e;
}

/// Dirichlet energy as the quadratic form f^T L f.
inline double dirichlet_energy(std::span<const double> f, const Laplacian& lap) {
    lap.check_len(f.size(), "dirichlet_energy");
    return lap.quadratic(f);
}

/// Recorded f^T L f with gradient 2 L f. `lap` must outlive the tape.
inline ad::Var dirichlet_energy(const ad::Var& f, const Laplacian& lap) {
    if (f.value().rank() != 1) throw ShapeError("dirichlet_energy: f must be a vector");
    lap.check_len(f.value().size(), "dirichlet_energy");
    const double e = lap.quadratic(f.value().values());
    const auto fi = f.index();
    const Laplacian* lp = &lap;
    return f.tape().push(
        ad::Tensor::scalar(e), {fi},
        [fi, lp](ad::Tape& t, std::size_t self) {
            const double g = t.grad(self)[0];
            const auto lf = lp->apply(t.value(fi).values());
            auto& gf = t.grad(fi);
            for (std::size_t i = 0; i < lf.size(); ++i) gf[i] += 2.0 * g * lf[i];
        },
        "dirichlet_energy");
}

/// Unnormalized log density of the smoothness prior, -E_D(f).
inline double prior_logdensity_unnormalized(std::span<const double> f, const data::AdjacencyGraph& g) {
    return -dirichlet_energy(f, g);
}

inline void require_positive_variance(std::span<const double> sigma2) {
    for (double s : sigma2) {
        if (!(s > 0.0)) throw DomainError("kl_gaussian_prior: non-positive variance " + std::to_string(s));
    }
}

/// Parameter-dependent part of KL[N(mu, diag sigma2) || smoothness prior]:
/// E_D(mu) + Tr(L diag sigma2) - 1/2 sum log sigma2.
inline double kl_gaussian_prior(std::span<const double> mu, std::span<const double> sigma2, const Laplacian& lap) {
    lap.check_len(mu.size(), "kl_gaussian_prior");
    lap.check_len(sigma2.size(), "kl_gaussian_prior");
    require_positive_variance(sigma2);
    double logdet = 0.0;
    for (double s : sigma2) logdet += std::log(s);
    return lap.quadratic(mu) + lap.trace_diag(sigma2) - 0.5 * logdet;
}

/// Recorded form of kl_gaussian_prior, differentiable in mu and sigma2.
inline ad::Var kl_gaussian_prior(const ad::Var& mu, const ad::Var& sigma2, const Laplacian& lap) {
    if (mu.value().rank() != 1 || sigma2.value().rank() != 1) throw ShapeError("kl_gaussian_prior: expects vectors");
    lap.check_len(sigma2.value().size(), "kl_gaussian_prior");
    require_positive_variance(sigma2.value().values());
    auto& tape = mu.tape();
    auto degree = tape.constant(ad::Tensor::vector(lap.degree()));
    auto energy = dirichlet_energy(mu, lap);
    auto trace = ad::dot(degree, sigma2);
    auto half_logdet = ad::scale(ad::sum(ad::log(sigma2)), 0.5);
    return ad::sub(ad::add(energy, trace), half_logdet);
}

/// log det(2L + eps I) through a dense Cholesky factorization. Diagnostic use
/// on small graphs only.
inline double jittered_precision_logdet(const Laplacian& lap, double eps) {
    const std::size_t n = lap.size();
    if (n > 512) throw DomainError("jittered_precision_logdet: graph too large for the dense path");
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        m[i * n + i] = 2.0 * lap.degree()[i] + eps;
        const auto cols = lap.neighbors(i);
        const auto w = lap.neighbor_weights(i);
        for (std::size_t k = 0; k < cols.size(); ++k) m[i * n + cols[k]] -= 2.0 * w[k];
    }
    double logdet = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= m[j * n + k] * m[j * n + k];
        if (!(d > 0.0)) throw NumericError("jittered_precision_logdet: matrix not positive definite");
        const double ljj = std::sqrt(d);
        m[j * n + j] = ljj;
        logdet += 2.0 * std::log(ljj);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= m[i * n + k] * m[j * n + k];
            m[i * n + j] = s / ljj;
        }
    }
    return logdet;
}

/// Full KL[N(mu, diag sigma2) || N(0, (2L + eps I)^-1)] with every constant
/// present. With eps = 0 the prior is improper and only kl_gaussian_prior is
/// meaningful.
inline double kl_gaussian_prior_jittered(std::span<const double> mu, std::span<const double> sigma2, const Laplacian& lap,
                                         double eps) {
    if (!(eps > 0.0)) throw DomainError("kl_gaussian_prior_jittered: jitter must be positive");
    const double n = static_cast<double>(lap.size());
    double mu2 = 0.0, s2 = 0.0;
    for (double m : mu) mu2 += m * m;
    for (double s : sigma2) s2 += s;
    return kl_gaussian_prior(mu, sigma2, lap) + 0.5 * eps * (mu2 + s2) - 0.5 * n - 0.5 * jittered_precision_logdet(lap, eps);
}

}  // namespace probsa::graph
