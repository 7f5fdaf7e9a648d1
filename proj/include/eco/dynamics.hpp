#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eco/linalg.hpp"

namespace eco {

struct LorenzParams {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
};

struct KsConfig {
    double domain_length = 32.0 * 3.14159265358979323846;
    std::size_t grid_points = 128;
    double dt_internal = 0.25;
    double snapshot_interval = 1.0;
};

struct Trajectory {
    Matrix states;  // T x n
    double dt_sample = 0.0;
    std::string system_tag;
};

Vec lorenz_rhs(const LorenzParams& p, std::span<const double> w);

using RhsFn = std::function<Vec(std::span<const double>)>;

/// Classical 4th-order Runge-Kutta step.
Vec rk4_step(const RhsFn& rhs, std::span<const double> w, double dt);

Trajectory simulate_lorenz(const LorenzParams& p, const Vec& w0, double duration_s,
                           double dt_sample = 0.05, double dt_internal = 0.005);

/// Random starting point in the attractor basin; deterministic in seed.
Vec default_lorenz_w0(std::uint64_t seed);

/// ETDRK4 spectral integrator for w_t + w_xx + w_xxxx + (w^2)_x/2 = 0 with
/// phi-coefficients from the 32-point contour-integral mean and 2/3-rule
/// dealiasing of the nonlinear term.
class KsEtdrk4 {
public:
    explicit KsEtdrk4(const KsConfig& config);

    Vec step(std::span<const double> w) const;
    const KsConfig& config() const { return config_; }

private:
    KsConfig config_;
    std::size_t n_;
    Vec e_, e2_;              // exp(dt L), exp(dt L / 2)
    Vec q_, f1_, f2_, f3_;    // contour-averaged coefficients
    Vec k_;                   // derivative wavenumbers (Nyquist zeroed)
    std::vector<bool> keep_;  // dealias mask
};

/// Band-limited random initial condition: modes 1..8, amplitude 0.1, phases
/// seeded — the same continuous field regardless of grid resolution.
Vec ks_random_ic(const KsConfig& config, std::uint64_t seed);

Trajectory simulate_ks(const KsConfig& config, const Vec& w0, double duration_s);
Trajectory simulate_ks(const KsConfig& config, std::uint64_t seed, double duration_s);

struct PairDataset {
    Matrix inputs;
    Matrix targets;
    std::size_t size() const { return inputs.rows; }
};

/// Consecutive (w_t, w_{t+1}) pairs from every trajectory, dropping the first
/// `skip` snapshots of each.
PairDataset build_pairs(const std::vector<Trajectory>& trajectories, std::size_t skip = 0);

}  // namespace eco
