#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eco/energy.hpp"
#include "eco/linalg.hpp"
#include "eco/numerics.hpp"
#include "eco/rng.hpp"
#include "eco/scalar_ops.hpp"

namespace eco::test {

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

/// A A^T + eps I, always SPD.
inline Matrix random_spd(std::size_t n, Rng& rng, double eps = 0.1) {
    Matrix a(n, n);
    for (double& x : a.data) x = rng.normal();
    Matrix q;
    matmul_abt(a, a, q);
    for (std::size_t i = 0; i < n; ++i) q(i, i) += eps;
    return q;
}

/// Full-mode energy whose Q reproduces `q` (bit-for-bit up to softplus
/// round-trip error): theta holds L's strict lower triangle raw and
/// softplus_inv(L_ii - eps_pd) on the diagonal.
inline QuadraticEnergy energy_from_q(const Matrix& q, Vec center, EnergyHyper hyper) {
    const Matrix l = cholesky(q);
    const std::size_t n = q.rows;
    Vec theta(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) theta[i * (i + 1) / 2 + j] = l(i, j);
        theta[i * (i + 1) / 2 + i] = softplus_inv(l(i, i) - QuadraticEnergy::eps_pd);
    }
    return QuadraticEnergy(QMode::full, std::move(center), std::move(theta), hyper);
}

/// Diag-mode energy with Q = diag(d).
inline QuadraticEnergy energy_from_diag(const Vec& d, Vec center, EnergyHyper hyper) {
    Vec theta(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        theta[i] = softplus_inv(d[i] - QuadraticEnergy::eps_pd);
    return QuadraticEnergy(QMode::diag, std::move(center), std::move(theta), hyper);
}

/// Reference DFT, O(N^2): X_k = sum_j x_j exp(-2 pi i j k / N).
inline void dft_reference(std::span<const double> x, Vec& re, Vec& im) {
    const std::size_t n = x.size();
    re.assign(n, 0.0);
    im.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(j * k) /
                               static_cast<double>(n);
            re[k] += x[j] * std::cos(ang);
            im[k] += x[j] * std::sin(ang);
        }
}

}  // namespace eco::test
