#pragma once

#include <span>
#include <string>
#include <vector>

#include "eco/linalg.hpp"

namespace eco {

enum class QMode { diag, full };

std::string to_string(QMode mode);
QMode qmode_from_string(const std::string& s);

/// Fixed hyperparameters of the dissipativity constraint. Validity requires
/// k > 0, 0 < alpha < alpha_threshold(k) and c > 1/alpha.
struct EnergyHyper {
    double alpha = 0.99;
    double c = 1000.0;
    double k = 100.0;
};

/// Largest admissible contraction factor for sigmoid steepness k:
/// [1 + (2k + 2*sqrt(2k))^-1]^-2. Strictly increasing, -> 1 as k -> inf.
double alpha_threshold(double k);

/// Gradient with the same layout as the learnable energy parameters.
struct EnergyGrad {
    Vec w_c;
    Vec theta;

    EnergyGrad() = default;
    EnergyGrad(std::size_t n, std::size_t theta_size) : w_c(n, 0.0), theta(theta_size, 0.0) {}
};

/// Quadratic energy V(w) = (w - w_c)^T Q (w - w_c) with Q positive definite
/// by construction. In diag mode Q = diag(softplus(theta) + eps_pd); in full
/// mode Q = L L^T where L is lower triangular with raw off-diagonal entries
/// and softplus(raw) + eps_pd on the diagonal.
class QuadraticEnergy {
public:
    static constexpr double eps_pd = 1e-6;

    QuadraticEnergy(QMode mode, Vec center, Vec theta, EnergyHyper hyper);

    /// Center at the data mean, diagonal scaled so the initial level set
    /// {V <= alpha*c} contains every row of `states` with margin factor 2.
    static QuadraticEnergy from_data(const Matrix& states, QMode mode, EnergyHyper hyper);

    std::size_t dim() const { return center_.size(); }
    QMode mode() const { return mode_; }
    const EnergyHyper& hyper() const { return hyper_; }

    const Vec& center() const { return center_; }
    Vec& center() { return center_; }
    const Vec& theta() const { return theta_; }
    Vec& theta() { return theta_; }
    std::size_t theta_size() const { return theta_.size(); }

    /// Diagonal of Q (diag mode only).
    Vec diag_d() const;
    /// Lower-triangular factor L with L L^T = Q.
    Matrix lower_factor() const;
    Matrix q_matrix() const;

    double eval(std::span<const double> w) const;
    /// dV/dw = 2 Q (w - w_c).
    Vec grad_state(std::span<const double> w) const;
    /// Adds coef * dV/d(w_c, theta) evaluated at w into `grad`.
    void accumulate_param_grad(std::span<const double> w, double coef, EnergyGrad& grad) const;

    /// det(Q)^(-1/2), evaluated in the log domain.
    double volume_penalty() const;
    void accumulate_volume_grad(double coef, EnergyGrad& grad) const;

    /// Q v without forming Q.
    Vec q_times(std::span<const double> v) const;

private:
    QMode mode_;
    Vec center_;
    Vec theta_;
    EnergyHyper hyper_;
};

}  // namespace eco
