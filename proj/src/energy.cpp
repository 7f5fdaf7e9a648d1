#include "eco/energy.hpp"

#include <cmath>
#include <stdexcept>

#include "eco/scalar_ops.hpp"

namespace eco {

std::string to_string(QMode mode) { return mode == QMode::diag ? "diag" : "full"; }

QMode qmode_from_string(const std::string& s) {
    if (s == "diag") return QMode::diag;
    if (s == "full") return QMode::full;
    throw std::invalid_argument("unknown Q mode: " + s);
}

double alpha_threshold(double k) {
    if (!(k > 0.0)) throw std::invalid_argument("alpha_threshold: k must be positive");
    const double inv = 1.0 / (2.0 * k + 2.0 * std::sqrt(2.0 * k));
    return std::pow(1.0 + inv, -2.0);
}

namespace {

std::size_t full_theta_size(std::size_t n) { return n * (n + 1) / 2; }

// row-major lower-triangle index of (i, j), j <= i
std::size_t tri_index(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }

}  // namespace

QuadraticEnergy::QuadraticEnergy(QMode mode, Vec center, Vec theta, EnergyHyper hyper)
    : mode_(mode), center_(std::move(center)), theta_(std::move(theta)), hyper_(hyper) {
    const std::size_t n = center_.size();
    if (n == 0) throw std::invalid_argument("QuadraticEnergy: empty center");
    const std::size_t want = mode_ == QMode::diag ? n : full_theta_size(n);
    if (theta_.size() != want)
        throw std::invalid_argument("QuadraticEnergy: theta size does not match mode");
    if (!(hyper_.k > 0.0)) throw std::invalid_argument("QuadraticEnergy: k must be positive");
    const double thr = alpha_threshold(hyper_.k);
    if (!(hyper_.alpha > 0.0) || hyper_.alpha >= thr)
        throw std::invalid_argument("QuadraticEnergy: alpha=" + std::to_string(hyper_.alpha) +
                                    " violates alpha < " + std::to_string(thr) +
                                    " required for k=" + std::to_string(hyper_.k));
    if (!(hyper_.c > 1.0 / hyper_.alpha))
        throw std::invalid_argument("QuadraticEnergy: c must exceed 1/alpha = " +
                                    std::to_string(1.0 / hyper_.alpha));
}

QuadraticEnergy QuadraticEnergy::from_data(const Matrix& states, QMode mode, EnergyHyper hyper) {
    const std::size_t t = states.rows;
    const std::size_t n = states.cols;
    if (t == 0 || n == 0) throw std::invalid_argument("from_data: empty state matrix");

    Vec mean(n, 0.0);
    for (std::size_t i = 0; i < t; ++i) axpy(1.0, states.row(i), mean);
    for (double& m : mean) m /= static_cast<double>(t);

    Vec var(n, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = states(i, j) - mean[j];
            var[j] += d * d;
        }
    for (double& v : var) v = std::max(v / static_cast<double>(t), 1e-12);

    // scale so max_i V(state_i) = alpha*c / 2 under d_j = s / var_j
    double m_max = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = states(i, j) - mean[j];
            s += d * d / var[j];
        }
        m_max = std::max(m_max, s);
    }
    const double scale = hyper.alpha * hyper.c / (2.0 * std::max(m_max, 1e-12));

    Vec d(n);
    for (std::size_t j = 0; j < n; ++j) d[j] = scale / var[j];

    if (mode == QMode::diag) {
        Vec theta(n);
        for (std::size_t j = 0; j < n; ++j) theta[j] = softplus_inv(d[j] - eps_pd);
        return QuadraticEnergy(mode, std::move(mean), std::move(theta), hyper);
    }
    Vec theta(full_theta_size(n), 0.0);
    for (std::size_t j = 0; j < n; ++j)
        theta[tri_index(j, j)] = softplus_inv(std::sqrt(d[j]) - eps_pd);
    return QuadraticEnergy(mode, std::move(mean), std::move(theta), hyper);
}

Vec QuadraticEnergy::diag_d() const {
    if (mode_ != QMode::diag) throw std::logic_error("diag_d: energy is in full mode");
    Vec d(theta_.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = softplus(theta_[i]) + eps_pd;
    return d;
}

Matrix QuadraticEnergy::lower_factor() const {
    const std::size_t n = dim();
    Matrix l(n, n, 0.0);
    if (mode_ == QMode::diag) {
        for (std::size_t i = 0; i < n; ++i) l(i, i) = std::sqrt(softplus(theta_[i]) + eps_pd);
        return l;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) l(i, j) = theta_[tri_index(i, j)];
        l(i, i) = softplus(theta_[tri_index(i, i)]) + eps_pd;
    }
    return l;
}

Matrix QuadraticEnergy::q_matrix() const {
    const std::size_t n = dim();
    Matrix q(n, n, 0.0);
    if (mode_ == QMode::diag) {
        const Vec d = diag_d();
        for (std::size_t i = 0; i < n; ++i) q(i, i) = d[i];
        return q;
    }
    const Matrix l = lower_factor();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k <= std::min(i, j); ++k) s += l(i, k) * l(j, k);
            q(i, j) = s;
        }
    return q;
}

double QuadraticEnergy::eval(std::span<const double> w) const {
    const std::size_t n = dim();
    check_dim(w.size(), n, "eval_V");
    if (mode_ == QMode::diag) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = w[i] - center_[i];
            s += (softplus(theta_[i]) + eps_pd) * v * v;
        }
        return s;
    }
    // V = ||L^T (w - w_c)||^2
    const Matrix l = lower_factor();
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double u = 0.0;
        for (std::size_t i = j; i < n; ++i) u += l(i, j) * (w[i] - center_[i]);
        s += u * u;
    }
    return s;
}

Vec QuadraticEnergy::q_times(std::span<const double> v) const {
    const std::size_t n = dim();
    check_dim(v.size(), n, "q_times");
    Vec out(n, 0.0);
    if (mode_ == QMode::diag) {
        for (std::size_t i = 0; i < n; ++i) out[i] = (softplus(theta_[i]) + eps_pd) * v[i];
        return out;
    }
    const Matrix l = lower_factor();
    Vec u(n, 0.0);  // u = L^T v
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = j; i < n; ++i) u[j] += l(i, j) * v[i];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) out[i] += l(i, j) * u[j];
    return out;
}

Vec QuadraticEnergy::grad_state(std::span<const double> w) const {
    Vec g = q_times(sub(w, center_));
    for (double& x : g) x *= 2.0;
    return g;
}

void QuadraticEnergy::accumulate_param_grad(std::span<const double> w, double coef,
                                            EnergyGrad& grad) const {
    const std::size_t n = dim();
    check_dim(w.size(), n, "grad_V_params");
    check_dim(grad.w_c.size(), n, "grad_V_params");
    check_dim(grad.theta.size(), theta_.size(), "grad_V_params");

    const Vec v = sub(w, center_);
    const Vec qv = q_times(v);
    for (std::size_t i = 0; i < n; ++i) grad.w_c[i] += coef * (-2.0 * qv[i]);

    if (mode_ == QMode::diag) {
        for (std::size_t i = 0; i < n; ++i)
            grad.theta[i] += coef * v[i] * v[i] * sigmoid(theta_[i]);
        return;
    }
    // dV/dL_ij = 2 v_i u_j with u = L^T v; diagonal entries chain through softplus
    const Matrix l = lower_factor();
    Vec u(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = j; i < n; ++i) u[j] += l(i, j) * v[i];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) grad.theta[tri_index(i, j)] += coef * 2.0 * v[i] * u[j];
        grad.theta[tri_index(i, i)] += coef * 2.0 * v[i] * u[i] * sigmoid(theta_[tri_index(i, i)]);
    }
}

double QuadraticEnergy::volume_penalty() const {
    double log_pen = 0.0;
    if (mode_ == QMode::diag) {
        for (double th : theta_) log_pen -= 0.5 * std::log(softplus(th) + eps_pd);
    } else {
        const std::size_t n = dim();
        for (std::size_t i = 0; i < n; ++i)
            log_pen -= std::log(softplus(theta_[tri_index(i, i)]) + eps_pd);
    }
    return std::exp(log_pen);
}

void QuadraticEnergy::accumulate_volume_grad(double coef, EnergyGrad& grad) const {
    const double pen = volume_penalty();
    if (mode_ == QMode::diag) {
        for (std::size_t i = 0; i < theta_.size(); ++i) {
            const double d = softplus(theta_[i]) + eps_pd;
            grad.theta[i] += coef * pen * (-0.5 / d) * sigmoid(theta_[i]);
        }
        return;
    }
    const std::size_t n = dim();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = tri_index(i, i);
        const double lii = softplus(theta_[idx]) + eps_pd;
        grad.theta[idx] += coef * pen * (-1.0 / lii) * sigmoid(theta_[idx]);
    }
}

}  // namespace eco
