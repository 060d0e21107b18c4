#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <string>

#include "probsa/error.hpp"

namespace probsa::objective {

/// Weight of the KL term as a function of the optimizer step.
struct LambdaPolicy {
    enum class Kind { Constant, Cyclical };

    Kind kind = Kind::Constant;
    double value = 1.0;          // constant policy
    std::size_t cycles = 5;      // cyclical: M
    double ramp_fraction = 0.8;  // cyclical: rho
    std::size_t total_steps = 1;

    static LambdaPolicy constant(double lambda, std::size_t total_steps = 1) {
        LambdaPolicy p;
        p.kind = Kind::Constant;
        p.value = lambda;
        p.total_steps = total_steps;
        return p;
    }

    static LambdaPolicy cyclical(std::size_t total_steps, std::size_t cycles = 5, double ramp_fraction = 0.8) {
        LambdaPolicy p;
        p.kind = Kind::Cyclical;
        p.cycles = cycles;
        p.ramp_fraction = ramp_fraction;
        p.total_steps = total_steps;
        return p;
    }

    /// Steps per cycle, floor(total / M).
    std::size_t cycle_length() const { return total_steps / cycles; }

    /// Steps spent ramping from 0 to 1 within each cycle, floor(rho * L_c).
    std::size_t ramp_steps() const {
        // The small offset keeps products like 0.29 * 100 from flooring one step short.
        return static_cast<std::size_t>(std::floor(ramp_fraction * static_cast<double>(cycle_length()) + 1e-9));
    }

    std::string describe() const {
        if (kind == Kind::Constant) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%g", value);
            return buf;
        }
        return "cyclical";
    }
};

inline void validate(const LambdaPolicy& p) {
    if (p.total_steps == 0) throw ConfigError("lambda policy: total_steps must be >= 1");
    if (p.kind == LambdaPolicy::Kind::Constant) {
        if (!(p.value >= 0.0 && p.value <= 1.0)) throw ConfigError("lambda policy: constant must lie in [0, 1]");
    } else {
        if (p.cycles < 1) throw ConfigError("lambda policy: cycles must be >= 1");
        if (!(p.ramp_fraction > 0.0 && p.ramp_fraction <= 1.0)) throw ConfigError("lambda policy: ramp fraction must lie in (0, 1]");
        if (p.cycle_length() < 1) throw ConfigError("lambda policy: fewer total steps than cycles");
    }
}

/// lambda at optimizer step `step`. The cyclical schedule restarts every
/// L_c steps (a trailing partial cycle follows the same pattern), ramps
/// linearly over floor(rho * L_c) steps and then holds 1.
inline double lambda_at(const LambdaPolicy& p, std::size_t step) {
    validate(p);
    if (step >= p.total_steps) {
        throw DomainError("lambda_at: step " + std::to_string(step) + " outside [0, " + std::to_string(p.total_steps) + ")");
    }
    if (p.kind == LambdaPolicy::Kind::Constant) return p.value;
    const std::size_t ramp = p.ramp_steps();
    if (ramp == 0) return 1.0;
    const std::size_t pos = step % p.cycle_length();
    return std::min(1.0, static_cast<double>(pos) / static_cast<double>(ramp));
}

}  // namespace probsa::objective
