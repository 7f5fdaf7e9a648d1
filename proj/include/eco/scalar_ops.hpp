#pragma once

#include <cmath>

namespace eco {

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

/// Inverse of softplus on (0, inf).
inline double softplus_inv(double y) {
    if (y <= 0.0) return -40.0;
    if (y > 20.0) return y;
    return std::log(std::expm1(y));
}

/// Numerically stable logistic; the exponent is clamped so arguments like
/// k*(b - V) ~ 1e8 do not overflow.
inline double sigmoid(double x) {
    if (x > 500.0) return 1.0;
    if (x < -500.0) return 0.0;
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace eco
