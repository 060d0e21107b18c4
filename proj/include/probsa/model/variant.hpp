#pragma once

#include <cstddef>
#include <string>

#include "probsa/error.hpp"

namespace probsa::model {

/// How the bag is transformed before pooling.
enum class BagTransform {
    ABMIL,   ///< independent per-instance MLP
    TABMIL,  ///< per-instance layer followed by a transformer encoder
};

/// Family of the variational attention posterior.
enum class Posterior {
    DiracDelta,    ///< point mass at mu(X); recovers smooth attention
    DiagGaussian,  ///< N(mu(X), diag sigma2(X))
};

struct Dims {
    std::size_t input = 32;       // P
    std::size_t embed = 64;       // D
    std::size_t attention = 16;   // D_f
    std::size_t layers = 2;       // encoder depth
    std::size_t heads = 4;
    std::size_t qk = 64;
    std::size_t v = 64;
};

struct ModelVariant {
    BagTransform transform = BagTransform::ABMIL;
    Posterior posterior = Posterior::DiracDelta;
    Dims dims;
};

inline void validate(const ModelVariant& v) {
    const auto& d = v.dims;
    if (d.input == 0 || d.embed == 0 || d.attention == 0) throw ConfigError("model dims must be positive");
    if (d.attention > d.embed) throw ConfigError("attention dim D_f must not exceed embedding dim D");
    if (v.transform == BagTransform::TABMIL) {
        if (d.heads == 0 || d.qk == 0 || d.v == 0) throw ConfigError("transformer heads/qk/v must be positive");
        if (d.v % d.heads != 0) throw ConfigError("heads must divide the value dim");
        if (d.qk % d.heads != 0) throw ConfigError("heads must divide the query/key dim");
    }
}

inline std::string to_string(BagTransform t) { return t == BagTransform::ABMIL ? "ABMIL" : "T-ABMIL"; }
inline std::string to_string(Posterior p) { return p == Posterior::DiracDelta ? "dirac" : "diag"; }

inline BagTransform parse_transform(const std::string& s) {
    if (s == "ABMIL") return BagTransform::ABMIL;
    if (s == "T-ABMIL") return BagTransform::TABMIL;
    throw ConfigError("unknown bag transform '" + s + "' (expected ABMIL or T-ABMIL)");
}

inline Posterior parse_posterior(const std::string& s) {
    if (s == "dirac") return Posterior::DiracDelta;
    if (s == "diag") return Posterior::DiagGaussian;
    throw ConfigError("unknown posterior '" + s + "' (expected dirac or diag)");
}

/// Short tag such as "ABMIL+diag".
inline std::string variant_name(const ModelVariant& v) { return to_string(v.transform) + "+" + to_string(v.posterior); }

}  // namespace probsa::model
