#include "eco/projection.hpp"

#include <cmath>
#include <stdexcept>

#include "eco/scalar_ops.hpp"

namespace eco {

double compute_bound(const QuadraticEnergy& energy, std::span<const double> w_t) {
    const double v = energy.eval(w_t);
    return energy.hyper().alpha * (v + relu(energy.hyper().c - v));
}

namespace {

// solve L^T y = u (back substitution); diag mode is an elementwise divide
Vec solve_lt(const QuadraticEnergy& energy, const Vec& u) {
    const std::size_t n = u.size();
    Vec y(n);
    if (energy.mode() == QMode::diag) {
        const Vec d = energy.diag_d();
        for (std::size_t i = 0; i < n; ++i) y[i] = u[i] / std::sqrt(d[i]);
        return y;
    }
    const Matrix l = energy.lower_factor();
    for (std::size_t ii = n; ii-- > 0;) {
        double s = u[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= l(j, ii) * y[j];
        y[ii] = s / l(ii, ii);
    }
    return y;
}

// solve L g_u = g_y (forward substitution)
Vec solve_l(const QuadraticEnergy& energy, const Vec& gy) {
    const std::size_t n = gy.size();
    Vec gu(n);
    if (energy.mode() == QMode::diag) {
        const Vec d = energy.diag_d();
        for (std::size_t i = 0; i < n; ++i) gu[i] = gy[i] / std::sqrt(d[i]);
        return gu;
    }
    const Matrix l = energy.lower_factor();
    for (std::size_t i = 0; i < n; ++i) {
        double s = gy[i];
        for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * gu[j];
        gu[i] = s / l(i, i);
    }
    return gu;
}

}  // namespace

Vec equality_project(const QuadraticEnergy& energy, std::span<const double> w_hat, double b) {
    const std::size_t n = energy.dim();
    check_dim(w_hat.size(), n, "equality_project");
    if (!(b > 0.0)) throw std::invalid_argument("equality_project: b must be positive");

    const Vec v_hat = sub(w_hat, energy.center());
    const double r = norm2(v_hat);
    if (r < eps_center(n))
        throw std::domain_error("equality_project: w_hat at the ellipsoid center (guard)");

    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = v_hat[i] / r;
    const Vec y = solve_lt(energy, u);

    const double sb = std::sqrt(b);
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = energy.center()[i] + sb * y[i];
    return out;
}

ProjectionRecord dissipative_project(const QuadraticEnergy& energy, std::span<const double> w_t,
                                     std::span<const double> w_hat, bool cache,
                                     bool stop_grad_gamma) {
    const std::size_t n = energy.dim();
    check_dim(w_t.size(), n, "dissipative_project");
    check_dim(w_hat.size(), n, "dissipative_project");

    ProjectionRecord rec;
    rec.V_input = energy.eval(w_t);
    rec.b = energy.hyper().alpha * (rec.V_input + relu(energy.hyper().c - rec.V_input));
    rec.V_hat = energy.eval(w_hat);
    rec.stop_grad_gamma = stop_grad_gamma;

    const Vec v_hat = sub(w_hat, energy.center());
    const double r = norm2(v_hat);
    if (r < eps_center(n)) {
        // V(w_hat) ~ 0 < b: constraint inactive but w_bar undefined; bypass the blend
        rec.guard_active = true;
        rec.gamma = 1.0;
        rec.w_star.assign(w_hat.begin(), w_hat.end());
        rec.w_bar = rec.w_star;
        if (cache) {
            rec.cached = true;
            rec.energy = &energy;
            rec.w_t.assign(w_t.begin(), w_t.end());
            rec.w_hat = rec.w_star;
        }
        return rec;
    }

    rec.gamma = sigmoid(energy.hyper().k * (rec.b - rec.V_hat));

    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = v_hat[i] / r;
    const Vec y = solve_lt(energy, u);
    const double sb = std::sqrt(rec.b);

    rec.w_bar.resize(n);
    rec.w_star.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        rec.w_bar[i] = energy.center()[i] + sb * y[i];
        rec.w_star[i] = rec.gamma * w_hat[i] + (1.0 - rec.gamma) * rec.w_bar[i];
    }

    if (cache) {
        rec.cached = true;
        rec.energy = &energy;
        rec.w_t.assign(w_t.begin(), w_t.end());
        rec.w_hat.assign(w_hat.begin(), w_hat.end());
        rec.u = std::move(u);
        rec.y = y;
        rec.r = r;
    }
    return rec;
}

double lemma1_certificate(double k, double b) {
    if (!(k > 0.0) || !(b > 0.0))
        throw std::invalid_argument("lemma1_certificate: k and b must be positive");
    const double kb = k * b;
    const double delta = 1.0 / (2.0 * kb + 2.0 * std::sqrt(2.0 * kb));
    return (1.0 + delta) * (1.0 + delta) * b;
}

ProjectionGrad projection_backward(const ProjectionRecord& rec, std::span<const double> upstream) {
    if (!rec.cached || rec.energy == nullptr)
        throw std::logic_error("projection_backward: record has no cached intermediates");
    const QuadraticEnergy& energy = *rec.energy;
    const std::size_t n = energy.dim();
    check_dim(upstream.size(), n, "projection_backward");

    ProjectionGrad g;
    g.w_hat.assign(n, 0.0);
    g.w_t.assign(n, 0.0);
    g.energy.w_c.assign(n, 0.0);
    g.energy.theta.assign(energy.theta().size(), 0.0);

    if (rec.guard_active) {
        g.w_hat.assign(upstream.begin(), upstream.end());
        return g;
    }

    const double gamma = rec.gamma;

    // w* = gamma*w_hat + (1-gamma)*w_bar
    for (std::size_t i = 0; i < n; ++i) g.w_hat[i] += gamma * upstream[i];
    Vec g_wbar(n);
    for (std::size_t i = 0; i < n; ++i) g_wbar[i] = (1.0 - gamma) * upstream[i];

    double g_b = 0.0;
    double g_vhat = 0.0;
    if (!rec.stop_grad_gamma) {
        double g_gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            g_gamma += upstream[i] * (rec.w_hat[i] - rec.w_bar[i]);
        const double g_s = g_gamma * gamma * (1.0 - gamma);
        g_b += energy.hyper().k * g_s;
        g_vhat -= energy.hyper().k * g_s;
    }

    // w_bar = w_c + sqrt(b)*y,  y = (L^T)^{-1} u,  u = (w_hat - w_c)/r
    const double sb = std::sqrt(rec.b);
    g_b += dot(g_wbar, rec.y) / (2.0 * sb);
    Vec g_y(n);
    for (std::size_t i = 0; i < n; ++i) g_y[i] = sb * g_wbar[i];
    const Vec g_u = solve_l(energy, g_y);

    // dL_{ab} coefficient is -y_a * g_u_b (a >= b)
    if (energy.mode() == QMode::diag) {
        const Vec d = energy.diag_d();
        for (std::size_t i = 0; i < n; ++i) {
            const double dl = -rec.y[i] * g_u[i];
            g.energy.theta[i] += dl * sigmoid(energy.theta()[i]) / (2.0 * std::sqrt(d[i]));
        }
    } else {
        for (std::size_t a = 0; a < n; ++a) {
            const std::size_t base = a * (a + 1) / 2;
            for (std::size_t bcol = 0; bcol < a; ++bcol)
                g.energy.theta[base + bcol] += -rec.y[a] * g_u[bcol];
            g.energy.theta[base + a] += -rec.y[a] * g_u[a] * sigmoid(energy.theta()[base + a]);
        }
    }

    const double udot = dot(rec.u, g_u);
    Vec g_vhat_vec(n);  // gradient wrt v_hat = w_hat - w_c through u
    for (std::size_t i = 0; i < n; ++i) g_vhat_vec[i] = (g_u[i] - udot * rec.u[i]) / rec.r;

    for (std::size_t i = 0; i < n; ++i) {
        g.w_hat[i] += g_vhat_vec[i];
        g.energy.w_c[i] += g_wbar[i] - g_vhat_vec[i];
    }

    // V_hat = V(w_hat) path (enters only through gamma)
    if (g_vhat != 0.0) {
        const Vec gs = energy.grad_state(rec.w_hat);
        for (std::size_t i = 0; i < n; ++i) g.w_hat[i] += g_vhat * gs[i];
        energy.accumulate_param_grad(rec.w_hat, g_vhat, g.energy);
    }

    // b = alpha*(V_t + relu(c - V_t)); ReLU'(0) = 0 so the kink uses the contraction branch
    const double db_dvt = rec.V_input >= energy.hyper().c ? energy.hyper().alpha : 0.0;
    const double g_vt = g_b * db_dvt;
    if (g_vt != 0.0) {
        const Vec gs = energy.grad_state(rec.w_t);
        for (std::size_t i = 0; i < n; ++i) g.w_t[i] += g_vt * gs[i];
        energy.accumulate_param_grad(rec.w_t, g_vt, g.energy);
    }
    return g;
}

}  // namespace eco
