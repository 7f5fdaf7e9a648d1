#include "eco/dynamics.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "eco/numerics.hpp"
#include "eco/rng.hpp"

namespace eco {

Vec lorenz_rhs(const LorenzParams& p, std::span<const double> w) {
    check_dim(w.size(), 3, "lorenz_rhs");
    return {p.sigma * (w[1] - w[0]), w[0] * (p.rho - w[2]) - w[1], w[0] * w[1] - p.beta * w[2]};
}

Vec rk4_step(const RhsFn& rhs, std::span<const double> w, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
    const std::size_t n = w.size();
    const Vec k1 = rhs(w);
    Vec tmp(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * dt * k1[i];
    const Vec k2 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * dt * k2[i];
    const Vec k3 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + dt * k3[i];
    const Vec k4 = rhs(tmp);
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = w[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

Trajectory simulate_lorenz(const LorenzParams& p, const Vec& w0, double duration_s,
                           double dt_sample, double dt_internal) {
    check_dim(w0.size(), 3, "simulate_lorenz");
    if (!(duration_s > 0.0) || !(dt_sample > 0.0) || !(dt_internal > 0.0) ||
        dt_internal > dt_sample)
        throw std::invalid_argument("simulate_lorenz: need 0 < dt_internal <= dt_sample");
    const auto substeps =
        static_cast<std::size_t>(std::llround(dt_sample / dt_internal));
    if (substeps == 0 || std::abs(substeps * dt_internal - dt_sample) > 1e-9 * dt_sample)
        throw std::invalid_argument("simulate_lorenz: dt_internal must divide dt_sample");

    const auto samples = static_cast<std::size_t>(duration_s / dt_sample) + 1;
    Trajectory traj;
    traj.states = Matrix(samples, 3);
    traj.dt_sample = dt_sample;
    traj.system_tag = "lorenz63";

    const RhsFn rhs = [&p](std::span<const double> w) { return lorenz_rhs(p, w); };
    Vec w = w0;
    std::copy(w.begin(), w.end(), traj.states.row(0).begin());
    for (std::size_t s = 1; s < samples; ++s) {
        for (std::size_t sub = 0; sub < substeps; ++sub) w = rk4_step(rhs, w, dt_internal);
        if (!all_finite(w)) throw std::runtime_error("simulate_lorenz: non-finite state");
        std::copy(w.begin(), w.end(), traj.states.row(s).begin());
    }
    return traj;
}

Vec default_lorenz_w0(std::uint64_t seed) {
    Rng rng(seed);
    // anywhere reasonable in the basin; the transient is discarded downstream
    return {rng.uniform(-15.0, 15.0), rng.uniform(-15.0, 15.0), rng.uniform(10.0, 40.0)};
}

KsEtdrk4::KsEtdrk4(const KsConfig& config) : config_(config), n_(config.grid_points) {
    if (!is_power_of_two(n_) || n_ < 4)
        throw std::invalid_argument("KsEtdrk4: grid_points must be a power of two >= 4");
    if (!(config_.dt_internal > 0.0) || !(config_.domain_length > 0.0))
        throw std::invalid_argument("KsEtdrk4: nonpositive step or domain");

    const double dt = config_.dt_internal;
    const double two_pi = 2.0 * 3.14159265358979323846;
    k_.assign(n_, 0.0);
    Vec lin(n_, 0.0);
    keep_.assign(n_, false);
    for (std::size_t i = 0; i < n_; ++i) {
        const auto m = i <= n_ / 2 ? static_cast<long long>(i)
                                   : static_cast<long long>(i) - static_cast<long long>(n_);
        const double k = two_pi * static_cast<double>(m) / config_.domain_length;
        k_[i] = i == n_ / 2 ? 0.0 : k;  // Nyquist derivative zeroed
        lin[i] = k * k - k * k * k * k;
        keep_[i] = std::llabs(m) <= static_cast<long long>(n_) / 3;  // 2/3 rule
    }

    e_.resize(n_);
    e2_.resize(n_);
    q_.resize(n_);
    f1_.resize(n_);
    f2_.resize(n_);
    f3_.resize(n_);
    constexpr int contour_points = 32;
    for (std::size_t i = 0; i < n_; ++i) {
        const double ldt = lin[i] * dt;
        e_[i] = std::exp(ldt);
        e2_[i] = std::exp(0.5 * ldt);
        std::complex<double> q{}, f1{}, f2{}, f3{};
        for (int j = 0; j < contour_points; ++j) {
            const double ang = 3.14159265358979323846 * (j + 0.5) / contour_points;
            const std::complex<double> z = ldt + std::polar(1.0, ang);
            const std::complex<double> ez = std::exp(z);
            const std::complex<double> z2 = z * z;
            const std::complex<double> z3 = z2 * z;
            q += (std::exp(0.5 * z) - 1.0) / z;
            f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3;
            f2 += (2.0 + z + ez * (-2.0 + z)) / z3;
            f3 += (-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3;
        }
        // contour symmetric about the real axis: the mean is real
        q_[i] = dt * q.real() / contour_points;
        f1_[i] = dt * f1.real() / contour_points;
        f2_[i] = dt * f2.real() / contour_points;
        f3_[i] = dt * f3.real() / contour_points;
    }
}

namespace {

struct Spec {
    Vec re, im;
    explicit Spec(std::size_t n) : re(n, 0.0), im(n, 0.0) {}
};

}  // namespace

Vec KsEtdrk4::step(std::span<const double> w) const {
    check_dim(w.size(), n_, "KsEtdrk4::step");

    Spec v(n_);
    std::copy(w.begin(), w.end(), v.re.begin());
    fft_complex(v.re, v.im, false);

    // N(v) = -0.5 i k FFT(IFFT(v)^2), dealiased
    auto nonlinear = [this](const Spec& s) {
        Spec u = s;
        fft_complex(u.re, u.im, true);
        for (std::size_t i = 0; i < n_; ++i) {
            u.re[i] = u.re[i] * u.re[i];  // physical field is real
            u.im[i] = 0.0;
        }
        fft_complex(u.re, u.im, false);
        Spec out(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            if (!keep_[i]) continue;
            out.re[i] = 0.5 * k_[i] * u.im[i];
            out.im[i] = -0.5 * k_[i] * u.re[i];
        }
        return out;
    };

    const Spec nv = nonlinear(v);
    Spec a(n_), b(n_), c(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        a.re[i] = e2_[i] * v.re[i] + q_[i] * nv.re[i];
        a.im[i] = e2_[i] * v.im[i] + q_[i] * nv.im[i];
    }
    const Spec na = nonlinear(a);
    for (std::size_t i = 0; i < n_; ++i) {
        b.re[i] = e2_[i] * v.re[i] + q_[i] * na.re[i];
        b.im[i] = e2_[i] * v.im[i] + q_[i] * na.im[i];
    }
    const Spec nb = nonlinear(b);
    for (std::size_t i = 0; i < n_; ++i) {
        c.re[i] = e2_[i] * a.re[i] + q_[i] * (2.0 * nb.re[i] - nv.re[i]);
        c.im[i] = e2_[i] * a.im[i] + q_[i] * (2.0 * nb.im[i] - nv.im[i]);
    }
    const Spec nc = nonlinear(c);

    Spec next(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        next.re[i] = e_[i] * v.re[i] + nv.re[i] * f1_[i] + 2.0 * (na.re[i] + nb.re[i]) * f2_[i] +
                     nc.re[i] * f3_[i];
        next.im[i] = e_[i] * v.im[i] + nv.im[i] * f1_[i] + 2.0 * (na.im[i] + nb.im[i]) * f2_[i] +
                     nc.im[i] * f3_[i];
    }
    fft_complex(next.re, next.im, true);
    if (!all_finite(next.re)) throw std::runtime_error("KsEtdrk4: non-finite intermediate");
    return next.re;
}

Vec ks_random_ic(const KsConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const double two_pi = 2.0 * 3.14159265358979323846;
    std::vector<double> phase(8);
    for (double& p : phase) p = rng.uniform(0.0, two_pi);
    Vec w(config.grid_points, 0.0);
    for (std::size_t j = 0; j < config.grid_points; ++j) {
        const double x = config.domain_length * static_cast<double>(j) /
                         static_cast<double>(config.grid_points);
        for (int m = 1; m <= 8; ++m)
            w[j] += 0.1 * std::cos(two_pi * m * x / config.domain_length + phase[m - 1]);
    }
    return w;
}

Trajectory simulate_ks(const KsConfig& config, const Vec& w0, double duration_s) {
    if (!(duration_s > 0.0)) throw std::invalid_argument("simulate_ks: duration must be positive");
    const auto substeps =
        static_cast<std::size_t>(std::llround(config.snapshot_interval / config.dt_internal));
    if (substeps == 0 || std::abs(substeps * config.dt_internal - config.snapshot_interval) >
                             1e-9 * config.snapshot_interval)
        throw std::invalid_argument("simulate_ks: dt_internal must divide snapshot_interval");

    const KsEtdrk4 solver(config);
    const auto samples = static_cast<std::size_t>(duration_s / config.snapshot_interval) + 1;

    Trajectory traj;
    traj.states = Matrix(samples, config.grid_points);
    traj.dt_sample = config.snapshot_interval;
    traj.system_tag = "ks";

    Vec w = w0;
    check_dim(w.size(), config.grid_points, "simulate_ks");
    std::copy(w.begin(), w.end(), traj.states.row(0).begin());
    for (std::size_t s = 1; s < samples; ++s) {
        for (std::size_t sub = 0; sub < substeps; ++sub) {
            w = solver.step(w);
            for (double x : w)
                if (std::abs(x) > 1e6)
                    throw std::runtime_error("simulate_ks: blowup — dt_internal too large");
        }
        std::copy(w.begin(), w.end(), traj.states.row(s).begin());
    }
    return traj;
}

Trajectory simulate_ks(const KsConfig& config, std::uint64_t seed, double duration_s) {
    return simulate_ks(config, ks_random_ic(config, seed), duration_s);
}

PairDataset build_pairs(const std::vector<Trajectory>& trajectories, std::size_t skip) {
    if (trajectories.empty()) throw std::invalid_argument("build_pairs: no trajectories");
    const std::size_t n = trajectories.front().states.cols;
    std::size_t total = 0;
    for (const auto& t : trajectories) {
        if (t.states.rows < 2) throw std::invalid_argument("build_pairs: trajectory too short");
        check_dim(t.states.cols, n, "build_pairs");
        if (t.states.rows > skip + 1) total += t.states.rows - 1 - skip;
    }
    if (total == 0) throw std::invalid_argument("build_pairs: skip leaves no pairs");

    PairDataset ds;
    ds.inputs = Matrix(total, n);
    ds.targets = Matrix(total, n);
    std::size_t row = 0;
    for (const auto& t : trajectories) {
        if (t.states.rows <= skip + 1) continue;
        for (std::size_t i = skip; i + 1 < t.states.rows; ++i, ++row) {
            std::copy(t.states.row(i).begin(), t.states.row(i).end(), ds.inputs.row(row).begin());
            std::copy(t.states.row(i + 1).begin(), t.states.row(i + 1).end(),
                      ds.targets.row(row).begin());
        }
    }
    return ds;
}

}  // namespace eco
