#pragma once

#include <span>

#include "eco/energy.hpp"
#include "eco/linalg.hpp"

namespace eco {

// Output of dissipative_project plus the intermediates the backward pass needs.
struct ProjectionRecord {
    Vec w_star;
    Vec w_bar;
    double gamma = 1.0;
    double b = 0.0;
    double V_input = 0.0;
    double V_hat = 0.0;
    bool guard_active = false;

    // backward caches (populated when cache=true)
    bool cached = false;
    bool stop_grad_gamma = false;
    const QuadraticEnergy* energy = nullptr;
    Vec w_t;
    Vec w_hat;
    Vec u;       // (w_hat - w_c)/r
    Vec y;       // (L^T)^{-1} u
    double r = 0.0;
};

struct ProjectionGrad {
    Vec w_hat;
    Vec w_t;
    EnergyGrad energy;
};

// b = alpha * [V(w_t) + ReLU(c - V(w_t))] = alpha * max(V(w_t), c)
double compute_bound(const QuadraticEnergy& energy, std::span<const double> w_t);

// w_bar = w_c + sqrt(b) (L^T)^{-1} (w_hat - w_c)/||w_hat - w_c||; lands exactly on {V = b}.
// Throws std::domain_error when ||w_hat - w_c|| < eps_center (caller must bypass).
Vec equality_project(const QuadraticEnergy& energy, std::span<const double> w_hat, double b);

ProjectionRecord dissipative_project(const QuadraticEnergy& energy, std::span<const double> w_t,
                                     std::span<const double> w_hat, bool cache = true,
                                     bool stop_grad_gamma = false);

// (1+delta)^2 * b with delta = (2kb + 2*sqrt(2kb))^{-1}
double lemma1_certificate(double k, double b);

ProjectionGrad projection_backward(const ProjectionRecord& record,
                                   std::span<const double> upstream);

inline double eps_center(std::size_t n) { return 1e-12 * std::sqrt(static_cast<double>(n)); }

}  // namespace eco
