#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "eco/projection.hpp"
#include "eco/rng.hpp"
#include "helpers.hpp"

using namespace eco;
using namespace eco::test;

namespace {

const EnergyHyper kHyper{0.99, 1000.0, 100.0};

// scale w_c + dir so that V lands exactly on `target`
Vec place_at_level(const QuadraticEnergy& e, const Vec& dir, double target, Rng& rng) {
    Vec w(e.dim());
    for (std::size_t i = 0; i < e.dim(); ++i) w[i] = e.center()[i] + dir[i];
    const double v = e.eval(w);
    const double s = std::sqrt(target / v);
    for (std::size_t i = 0; i < e.dim(); ++i) w[i] = e.center()[i] + s * dir[i];
    (void)rng;
    return w;
}

Vec random_dir(std::size_t n, Rng& rng) {
    Vec d(n);
    for (double& x : d) x = rng.normal();
    if (norm2(d) < 1e-8) d[0] = 1.0;
    return d;
}

}  // namespace

TEST_CASE("compute_bound on both branches and at the kink") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0}, {0.0, 0.0}, kHyper);
    // V = 5000 > c: decay branch, b = alpha*V
    CHECK(compute_bound(e, Vec{std::sqrt(5000.0), 0.0}) == doctest::Approx(4950.0).epsilon(1e-9));
    // V = 1 < c: invariance branch, b = alpha*c
    CHECK(compute_bound(e, Vec{1.0, 0.0}) == doctest::Approx(990.0).epsilon(1e-12));
    // V = 0 at the center
    CHECK(compute_bound(e, Vec{0.0, 0.0}) == doctest::Approx(990.0).epsilon(1e-12));
    // V = c exactly: both branches agree at alpha*c
    CHECK(compute_bound(e, Vec{std::sqrt(1000.0), 0.0}) == doctest::Approx(990.0).epsilon(1e-9));
}

TEST_CASE("equality_project hand examples") {
    // isotropic Q: radial rescale to length sqrt(b)
    const QuadraticEnergy iso = energy_from_diag({1.0, 1.0}, {0.0, 0.0}, kHyper);
    const Vec w1 = equality_project(iso, Vec{30.0, 40.0}, 100.0);
    CHECK(w1[0] == doctest::Approx(6.0).epsilon(1e-9));
    CHECK(w1[1] == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(iso.eval(w1) == doctest::Approx(100.0).epsilon(1e-12));

    // Q = diag(4,1): w_hat = (1,0), b = 1 lands at (1/2, 0)
    const QuadraticEnergy aniso = energy_from_diag({4.0, 1.0}, {0.0, 0.0}, kHyper);
    const Vec w2 = equality_project(aniso, Vec{1.0, 0.0}, 1.0);
    CHECK(w2[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(w2[1]) < 1e-15);

    // off-center: the center offset is preserved
    const QuadraticEnergy off = energy_from_diag({1.0, 1.0}, {5.0, -3.0}, kHyper);
    const Vec w3 = equality_project(off, Vec{5.0 + 3.0, -3.0 + 4.0}, 25.0);
    CHECK(w3[0] == doctest::Approx(5.0 + 3.0).epsilon(1e-9));
    CHECK(w3[1] == doctest::Approx(-3.0 + 4.0).epsilon(1e-9));
}

TEST_CASE("equality_project lands exactly on {V = b}") {
    Rng rng(101);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.index(6);
        Vec center(n);
        for (double& x : center) x = rng.uniform(-10.0, 10.0);
        QuadraticEnergy e = trial % 2 == 0
                                ? energy_from_q(random_spd(n, rng), center, kHyper)
                                : [&] {
                                      Vec d(n);
                                      for (double& x : d) x = rng.uniform(0.05, 20.0);
                                      return energy_from_diag(d, center, kHyper);
                                  }();
        Vec w_hat(n);
        for (std::size_t i = 0; i < n; ++i) w_hat[i] = center[i] + 5.0 * rng.normal();
        if (norm2(sub(w_hat, center)) < 1e-6) w_hat[0] += 1.0;
        const double b = std::pow(10.0, rng.uniform(-3.0, 6.0));
        const Vec w_bar = equality_project(e, w_hat, b);
        CHECK(std::abs(e.eval(w_bar) - b) / b < 1e-9);
    }
}

TEST_CASE("equality_project input validation") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0}, {0.0, 0.0}, kHyper);
    CHECK_THROWS_AS((void)equality_project(e, Vec{1.0, 0.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)equality_project(e, Vec{1.0, 0.0}, -5.0), std::invalid_argument);
    CHECK_THROWS_AS((void)equality_project(e, Vec{0.0, 0.0}, 1.0), std::domain_error);
    CHECK_THROWS_AS((void)equality_project(e, Vec{1e-14, 0.0}, 1.0), std::domain_error);
    CHECK_THROWS_AS((void)equality_project(e, Vec{1.0, 0.0, 0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("dissipative_project is the identity when the constraint is slack") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}, kHyper);
    const Vec w_t = {1.5, 2.0, 3.0};
    const Vec w_hat = {4.0, 1.0, 5.0};  // V_hat = 9+1+4 = 14 << b = 990
    const ProjectionRecord rec = dissipative_project(e, w_t, w_hat);
    CHECK(rec.gamma == 1.0);  // sigmoid saturates exactly
    CHECK_FALSE(rec.guard_active);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rec.w_star[i] == w_hat[i]);
    CHECK(rec.b == doctest::Approx(990.0).epsilon(1e-12));
}

TEST_CASE("dissipative_project clamps a deep overshoot onto {V = b}") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0}, {0.0, 0.0}, kHyper);
    const Vec w_t = {0.0, 0.0};                       // b = alpha*c = 990
    const Vec w_hat = {2.0 * std::sqrt(990.0), 0.0};  // V_hat = 4b
    const ProjectionRecord rec = dissipative_project(e, w_t, w_hat);
    CHECK(rec.gamma == 0.0);  // k*(b - V_hat) ~ -3e5, fully saturated
    CHECK(rec.w_star[0] == doctest::Approx(std::sqrt(990.0)).epsilon(1e-12));
    CHECK(std::abs(rec.w_star[1]) < 1e-12);
    CHECK(e.eval(rec.w_star) == doctest::Approx(990.0).epsilon(1e-12));
    CHECK(max_abs_diff(rec.w_star, rec.w_bar) == 0.0);
}

TEST_CASE("guard: w_hat at the center bypasses the blend") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0}, {2.0, -1.0}, kHyper);
    const ProjectionRecord rec = dissipative_project(e, Vec{3.0, 0.0}, Vec{2.0, -1.0});
    CHECK(rec.guard_active);
    CHECK(rec.gamma == 1.0);
    CHECK(rec.w_star[0] == 2.0);
    CHECK(rec.w_star[1] == -1.0);
}

TEST_CASE("blend identity and gamma range") {
    Rng rng(73);
    const QuadraticEnergy e = energy_from_q(random_spd(3, rng), {1.0, 0.0, -2.0}, kHyper);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec w_t = place_at_level(e, random_dir(3, rng),
                                       kHyper.c * std::pow(10.0, rng.uniform(-2.0, 1.0)), rng);
        const double b_est = compute_bound(e, w_t);
        const Vec w_hat = place_at_level(e, random_dir(3, rng),
                                         b_est * std::pow(10.0, rng.uniform(-2.0, 2.0)), rng);
        const ProjectionRecord rec = dissipative_project(e, w_t, w_hat);
        CHECK(rec.gamma >= 0.0);
        CHECK(rec.gamma <= 1.0);
        CHECK(rec.b == doctest::Approx(b_est).epsilon(1e-12));
        for (std::size_t i = 0; i < 3; ++i) {
            const double blend = rec.gamma * w_hat[i] + (1.0 - rec.gamma) * rec.w_bar[i];
            CHECK(std::abs(rec.w_star[i] - blend) < 1e-12 * std::max(1.0, std::abs(blend)));
        }
    }
}

TEST_CASE("lemma1_certificate frozen constants") {
    // delta(k=100, b=1) = 1/(200 + 2*sqrt(200))
    const double delta = 1.0 / (200.0 + 2.0 * std::sqrt(200.0));
    CHECK(delta == doctest::Approx(0.004380503284503523).epsilon(1e-14));
    CHECK(lemma1_certificate(100.0, 1.0) ==
          doctest::Approx((1.0 + delta) * (1.0 + delta)).epsilon(1e-15));
    CHECK(lemma1_certificate(100.0, 1.0) == doctest::Approx(1.0087801953780324).epsilon(1e-14));
    // the value quoted to six figures elsewhere: 1.008780 (~1.008779 rounded loosely)
    CHECK(std::abs(lemma1_certificate(100.0, 1.0) - 1.008779) < 2e-6);

    CHECK(lemma1_certificate(100.0, 990.0) == doctest::Approx(990.0099552794856).epsilon(1e-13));

    // kb -> infinity: certificate collapses to b itself
    CHECK(lemma1_certificate(1e12, 1.0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(lemma1_certificate(1e12, 1.0) > 1.0);

    CHECK_THROWS_AS((void)lemma1_certificate(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)lemma1_certificate(100.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)lemma1_certificate(100.0, -1.0), std::invalid_argument);
}

TEST_CASE("Lemma 1: V(w*) <= (1+delta)^2 b over 10000 random instances") {
    Rng rng(1234);
    const double ks[3] = {10.0, 100.0, 1000.0};
    const double alphas[3] = {0.9, 0.99, 0.999};  // all below alpha_threshold(k)
    std::size_t tight = 0;                        // instances with V(w*) >= 0.999 b
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t which = rng.index(3);
        const double c = rng.uniform(2.0, 1500.0);
        const EnergyHyper hyper{alphas[which], c, ks[which]};
        const std::size_t n = 1 + rng.index(6);

        Vec center(n);
        for (double& x : center) x = rng.uniform(-5.0, 5.0);
        QuadraticEnergy e = trial % 2 == 0 ? energy_from_q(random_spd(n, rng), center, hyper)
                                           : [&] {
                                                 Vec d(n);
                                                 for (double& x : d) x = rng.uniform(0.1, 10.0);
                                                 return energy_from_diag(d, center, hyper);
                                             }();

        const Vec w_t = place_at_level(e, random_dir(n, rng),
                                       c * std::pow(10.0, rng.uniform(-2.0, 1.0)), rng);
        const double b = compute_bound(e, w_t);
        // V_hat from far below b to 1e6 * b, concentrated near the transition
        const double vhat_target = trial % 5 == 0
                                       ? b * rng.uniform(0.9, 1.1)
                                       : b * std::pow(10.0, rng.uniform(-3.0, 6.0));
        const Vec w_hat = place_at_level(e, random_dir(n, rng), vhat_target, rng);

        const ProjectionRecord rec = dissipative_project(e, w_t, w_hat, /*cache=*/false);
        const double v_star = e.eval(rec.w_star);
        const double cert = lemma1_certificate(hyper.k, rec.b);
        CHECK(v_star <= cert * (1.0 + 1e-12));
        if (v_star >= 0.999 * rec.b) ++tight;
    }
    // the bound is not vacuous: plenty of instances sit essentially on it
    CHECK(tight > 100);
}

TEST_CASE("backward: slack constraint passes upstream through untouched") {
    const QuadraticEnergy e = energy_from_diag({1.0, 2.0, 0.5}, {1.0, 2.0, 3.0}, kHyper);
    const Vec w_t = {1.5, 2.5, 3.0};
    const Vec w_hat = {2.0, 1.0, 4.0};  // V_hat << b, gamma saturates to 1
    const ProjectionRecord rec = dissipative_project(e, w_t, w_hat, /*cache=*/true);
    REQUIRE(rec.gamma == 1.0);
    const Vec up = {0.3, -1.7, 2.2};
    const ProjectionGrad g = projection_backward(rec, up);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(g.w_hat[i] == up[i]);
        CHECK(g.w_t[i] == 0.0);
        CHECK(g.energy.w_c[i] == 0.0);
    }
    for (double t : g.energy.theta) CHECK(t == 0.0);
}

TEST_CASE("backward: guard record behaves like the identity") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0}, {2.0, -1.0}, kHyper);
    const ProjectionRecord rec = dissipative_project(e, Vec{3.0, 0.0}, Vec{2.0, -1.0});
    REQUIRE(rec.guard_active);
    const Vec up = {1.5, -0.5};
    const ProjectionGrad g = projection_backward(rec, up);
    CHECK(g.w_hat[0] == 1.5);
    CHECK(g.w_hat[1] == -0.5);
    CHECK(g.w_t[0] == 0.0);
    for (double t : g.energy.theta) CHECK(t == 0.0);
}

TEST_CASE("backward: saturated clamp matches the analytic tangential Jacobian") {
    // Q = I, w_c = 0, gamma = 0 exactly: w* = sqrt(b) (w_hat/r), so
    // d w*/d w_hat = sqrt(b)/r (I - u u^T) and upstream maps accordingly.
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, kHyper);
    const Vec w_t = {0.0, 0.0, 0.0};  // b = 990
    const Vec w_hat = {80.0, -40.0, 20.0};
    const ProjectionRecord rec = dissipative_project(e, w_t, w_hat, /*cache=*/true);
    REQUIRE(rec.gamma == 0.0);
    const double r = norm2(w_hat);
    Vec u(3);
    for (std::size_t i = 0; i < 3; ++i) u[i] = w_hat[i] / r;

    const Vec up = {0.7, 0.4, -1.1};
    const ProjectionGrad g = projection_backward(rec, up);
    const double udot = dot(u, up);
    const double sb = std::sqrt(990.0);
    for (std::size_t i = 0; i < 3; ++i) {
        const double want = sb / r * (up[i] - udot * u[i]);
        CHECK(g.w_hat[i] == doctest::Approx(want).epsilon(1e-12));
        CHECK(g.w_t[i] == 0.0);  // w_t inside M(c): flat branch of the bound
    }
}

TEST_CASE("backward requires cached intermediates") {
    const QuadraticEnergy e = energy_from_diag({1.0, 1.0}, {0.0, 0.0}, kHyper);
    const ProjectionRecord rec =
        dissipative_project(e, Vec{1.0, 1.0}, Vec{3.0, 4.0}, /*cache=*/false);
    CHECK_THROWS_AS((void)projection_backward(rec, Vec{1.0, 0.0}), std::logic_error);
}

namespace {

// finite-difference check of every input of the projection at one instance
void check_projection_fd(const QuadraticEnergy& e, const Vec& w_t, const Vec& w_hat,
                         bool stop_grad_gamma, double tol) {
    const std::size_t n = e.dim();
    Rng crng(7);
    Vec coeff(n);
    for (double& x : coeff) x = crng.uniform(-1.0, 1.0);

    const ProjectionRecord rec = dissipative_project(e, w_t, w_hat, true, stop_grad_gamma);
    const ProjectionGrad g = projection_backward(rec, coeff);

    const double base_gamma = rec.gamma;
    auto value = [&](const QuadraticEnergy& ee, const Vec& wt, const Vec& wh) {
        const ProjectionRecord r2 = dissipative_project(ee, wt, wh, false);
        if (!stop_grad_gamma) return dot(coeff, r2.w_star);
        // frozen-gamma oracle: blend with the base point's gamma
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += coeff[i] * (base_gamma * wh[i] + (1.0 - base_gamma) * r2.w_bar[i]);
        return s;
    };

    auto fd_ok = [&](double got, double fd) {
        return std::abs(got - fd) <= tol * std::max({1.0, std::abs(got), std::abs(fd)});
    };

    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i) {
        Vec hp = w_hat, hm = w_hat;
        hp[i] += h;
        hm[i] -= h;
        CHECK(fd_ok(g.w_hat[i], (value(e, w_t, hp) - value(e, w_t, hm)) / (2.0 * h)));

        Vec tp = w_t, tm = w_t;
        tp[i] += h;
        tm[i] -= h;
        CHECK(fd_ok(g.w_t[i], (value(e, tp, w_hat) - value(e, tm, w_hat)) / (2.0 * h)));

        QuadraticEnergy ep = e, em = e;
        ep.center()[i] += h;
        em.center()[i] -= h;
        CHECK(fd_ok(g.energy.w_c[i], (value(ep, w_t, w_hat) - value(em, w_t, w_hat)) / (2.0 * h)));
    }
    for (std::size_t i = 0; i < e.theta_size(); ++i) {
        QuadraticEnergy ep = e, em = e;
        ep.theta()[i] += h;
        em.theta()[i] -= h;
        CHECK(
            fd_ok(g.energy.theta[i], (value(ep, w_t, w_hat) - value(em, w_t, w_hat)) / (2.0 * h)));
    }
}

}  // namespace

TEST_CASE("backward matches finite differences through every input") {
    // small c and k widen the sigmoid transition so all paths carry signal
    const EnergyHyper hyper{0.9, 2.0, 10.0};
    Rng rng(99);
    for (QMode mode : {QMode::diag, QMode::full}) {
        QuadraticEnergy e = mode == QMode::diag
                                ? energy_from_diag({1.3, 0.6, 2.1}, {0.4, -0.2, 1.0}, hyper)
                                : energy_from_q(random_spd(3, rng), {0.4, -0.2, 1.0}, hyper);

        // (a) contraction branch inactive (V_t < c), gamma mid-transition
        Vec w_t = place_at_level(e, random_dir(3, rng), 0.5 * hyper.c, rng);
        double b = compute_bound(e, w_t);
        Vec w_hat = place_at_level(e, random_dir(3, rng), 1.05 * b, rng);
        check_projection_fd(e, w_t, w_hat, false, 1e-5);

        // (b) decay branch active (V_t > c), so the bound carries w_t gradient
        w_t = place_at_level(e, random_dir(3, rng), 3.0 * hyper.c, rng);
        b = compute_bound(e, w_t);
        w_hat = place_at_level(e, random_dir(3, rng), 0.97 * b, rng);
        check_projection_fd(e, w_t, w_hat, false, 1e-5);

        // (c) deep overshoot: gamma saturated at 0, pure clamp geometry
        w_t = place_at_level(e, random_dir(3, rng), 0.3 * hyper.c, rng);
        b = compute_bound(e, w_t);
        w_hat = place_at_level(e, random_dir(3, rng), 50.0 * b, rng);
        check_projection_fd(e, w_t, w_hat, false, 1e-5);

        // (d) far below the bound: identity region
        w_hat = place_at_level(e, random_dir(3, rng), 0.01 * b, rng);
        check_projection_fd(e, w_t, w_hat, false, 1e-5);
    }
}

TEST_CASE("stop_grad_gamma freezes the blend weight in the backward pass") {
    const EnergyHyper hyper{0.9, 2.0, 10.0};
    Rng rng(555);
    const QuadraticEnergy e = energy_from_q(random_spd(3, rng), {0.1, 0.3, -0.5}, hyper);
    const Vec w_t = place_at_level(e, random_dir(3, rng), 0.8 * hyper.c, rng);
    const double b = compute_bound(e, w_t);
    const Vec w_hat = place_at_level(e, random_dir(3, rng), 1.1 * b, rng);

    // forward output is unchanged by the flag
    const ProjectionRecord full = dissipative_project(e, w_t, w_hat, true, false);
    const ProjectionRecord stop = dissipative_project(e, w_t, w_hat, true, true);
    CHECK(max_abs_diff(full.w_star, stop.w_star) == 0.0);
    CHECK(full.gamma == stop.gamma);

    // backward matches the frozen-gamma finite difference
    check_projection_fd(e, w_t, w_hat, true, 1e-5);

    // and differs from the full gradient inside the transition zone
    Vec up(3, 1.0);
    const ProjectionGrad gf = projection_backward(full, up);
    const ProjectionGrad gs = projection_backward(stop, up);
    CHECK(max_abs_diff(gf.w_hat, gs.w_hat) > 1e-6);
}

TEST_CASE("Theorem 1: composing any map with the projection is absorbing") {
    Rng rng(2718);
    const QuadraticEnergy e = energy_from_q(random_spd(3, rng), {1.0, -2.0, 0.5}, kHyper);
    const double c = kHyper.c;
    const double invariant_cap = lemma1_certificate(kHyper.k, kHyper.alpha * c);

    // wildly expansive "emulator": w -> w_c + 3.7*(w - w_c) + drift
    auto violent_map = [&](const Vec& w) {
        Vec out(3);
        for (std::size_t i = 0; i < 3; ++i)
            out[i] = e.center()[i] + 3.7 * (w[i] - e.center()[i]) + std::sin(w[(i + 1) % 3]);
        return out;
    };

    Vec w = place_at_level(e, random_dir(3, rng), 100.0 * c, rng);
    double v_prev = e.eval(w);
    std::size_t entered = 0;
    bool inside = false;
    for (std::size_t t = 0; t < 1000; ++t) {
        const ProjectionRecord rec = dissipative_project(e, w, violent_map(w), false);
        w = rec.w_star;
        const double v = e.eval(w);
        CHECK(std::isfinite(v));
        const double b = kHyper.alpha * std::max(v_prev, c);
        CHECK(v <= lemma1_certificate(kHyper.k, b) * (1.0 + 1e-12));
        // the entry state itself only satisfies V <= c; the cert(alpha*c) cap
        // binds from the following step onward
        if (inside) CHECK(v <= invariant_cap * (1.0 + 1e-12));
        if (!inside && v <= c) {
            inside = true;
            entered = t + 1;
        }
        v_prev = v;
    }
    CHECK(inside);
    // within the Theorem 1 entry budget for V_0 = 100c
    CHECK(entered <= 459);
}
