#pragma once

#include <optional>
#include <span>
#include <string>

#include "eco/dynamics.hpp"
#include "eco/energy.hpp"

namespace eco {

struct HistogramSpec {
    std::size_t bin_count = 100;
    double lo = 0.0;
    double hi = 1.0;
    double smoothing_eps = 1e-10;
};

/// Range from data min/max widened by `extend` total (half on each side).
HistogramSpec histogram_range(std::span<const double> values, std::size_t bins,
                              double extend = 0.05, double eps = 1e-10);

/// Smoothed, normalized bin probabilities; out-of-range samples land in the
/// edge bins.
Vec histogram_probabilities(std::span<const double> values, const HistogramSpec& spec);

/// Sum P log(P/Q), natural log. Inputs must be normalized and strictly
/// positive (post-smoothing).
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Pools every entry of both trajectories into 1D histograms; the range comes
/// from the truth. Transient snapshots are discarded from both sides first.
double kl_physical(const Trajectory& truth, const Trajectory& pred, std::size_t bins = 100,
                   std::size_t transient = 50, double eps = 1e-10);

/// Same, per coordinate (each with its own truth-derived range).
Vec kl_physical_per_dim(const Trajectory& truth, const Trajectory& pred, std::size_t bins = 100,
                        std::size_t transient = 50, double eps = 1e-10);

/// 2D KL over projections onto the truth's first two principal components.
double kl_pca(const Trajectory& truth, const Trajectory& pred, std::size_t bins_per_axis = 50,
              std::size_t transient = 50, double eps = 1e-10);

/// P(m) = time average of |X_m|^2 for m = 1..n/2.
Vec power_spectrum(const Trajectory& traj);

/// ((1/N) sum |log P - log P_hat|^p)^(1/p); spectra floored at 1e-300.
double log_spectral_distance(std::span<const double> truth_spectrum,
                             std::span<const double> pred_spectrum, double p = 2.0);

struct MetricsOptions {
    std::size_t bins_1d = 100;
    std::size_t bins_pca = 50;
    std::size_t transient = 50;
    double smoothing_eps = 1e-10;
    double lsd_p = 2.0;
};

struct MetricsReport {
    double kl_physical = 0.0;
    Vec kl_physical_per_dim;
    double kl_pca = 0.0;
    std::optional<double> log_spectral_distance;  // absent when n is not a power of two
    bool bounded = true;
    std::size_t truth_rows = 0;
    std::size_t pred_rows = 0;
    std::optional<double> containment_fraction;  // truth states with V <= c, when energy given
    MetricsOptions options;
};

/// Truncates pred at its first non-finite or |x| > 1e8 row (bounded=false),
/// then computes all metrics on the surviving prefix.
MetricsReport evaluate(const Trajectory& truth, const Trajectory& pred,
                       const MetricsOptions& options = {},
                       const QuadraticEnergy* energy = nullptr);

std::string report_to_json(const MetricsReport& report);

}  // namespace eco
