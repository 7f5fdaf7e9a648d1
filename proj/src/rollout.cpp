#include "eco/rollout.hpp"

#include <cmath>
#include <stdexcept>

namespace eco {

namespace {

bool exceeds_blowup(const Vec& w) {
    for (double x : w)
        if (!std::isfinite(x) || std::abs(x) > 1e8) return true;
    return false;
}

}  // namespace

RolloutResult rollout(const TrainState& model, const Vec& w0, std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("rollout: steps must be >= 1");
    const std::size_t n = model.energy.dim();
    check_dim(w0.size(), n, "rollout");
    if (!all_finite(w0)) throw std::invalid_argument("rollout: non-finite initial state");

    RolloutResult res;
    res.trajectory.dt_sample = 0.0;  // model steps, not integrator seconds
    res.trajectory.system_tag = model.projection_enabled ? "eco" : "baseline";

    Matrix states(steps + 1, n);
    res.energy_trace.reserve(steps + 1);
    std::copy(w0.begin(), w0.end(), states.row(0).begin());
    res.energy_trace.push_back(model.energy.eval(w0));

    Vec w = w0;
    std::size_t stored = 1;
    for (std::size_t t = 0; t < steps; ++t) {
        w = model.predict(w);
        if (exceeds_blowup(w)) {
            if (model.projection_enabled)
                throw std::runtime_error(
                    "rollout: non-finite state with projection enabled (invariant violated)");
            res.bounded = false;
            res.blowup_step = t + 1;
            break;
        }
        std::copy(w.begin(), w.end(), states.row(stored).begin());
        res.energy_trace.push_back(model.energy.eval(w));
        ++stored;
    }

    res.trajectory.states = Matrix(stored, n);
    std::copy(states.data.begin(), states.data.begin() + static_cast<std::ptrdiff_t>(stored * n),
              res.trajectory.states.data.begin());

    const double c = model.energy.hyper().c;
    for (std::size_t t = 0; t < res.energy_trace.size(); ++t) {
        if (res.energy_trace[t] <= c) {
            res.entry_step = t;
            break;
        }
    }
    if (res.entry_step) {
        for (std::size_t t = *res.entry_step; t < res.energy_trace.size(); ++t)
            res.max_post_entry_energy = std::max(res.max_post_entry_energy, res.energy_trace[t]);
    }
    return res;
}

DissipativityReport verify_dissipativity(const RolloutResult& result,
                                         const QuadraticEnergy& energy) {
    DissipativityReport rep;
    const double alpha = energy.hyper().alpha;
    const double c = energy.hyper().c;
    const double k = energy.hyper().k;
    const Vec& trace = result.energy_trace;
    if (trace.empty()) {
        rep.pass = false;
        rep.violation = "empty energy trace";
        return rep;
    }

    for (std::size_t t = 0; t + 1 < trace.size(); ++t) {
        const double vt = trace[t];
        const double b = alpha * std::max(vt, c);
        const double cap = lemma1_certificate(k, b);  // (1+delta_t)^2 * alpha * max(V_t, c)
        if (trace[t + 1] > cap * (1.0 + 1e-12)) {
            rep.pass = false;
            rep.first_violation_step = t;
            rep.violation = vt > c ? "decay condition (a): V_{t+1} > (1+d)^2 alpha V_t"
                                   : "invariance condition (b): V_{t+1} > (1+d)^2 alpha c";
            return rep;
        }
    }

    if (trace[0] > c) {
        rep.entry_bound =
            static_cast<std::size_t>(std::ceil(std::log(c / trace[0]) / std::log(alpha)));
        if (!result.entry_step || *result.entry_step > rep.entry_bound) {
            rep.pass = false;
            rep.first_violation_step = result.entry_step;
            rep.violation = "entry-time condition (c): M(c) not entered within the bound";
            return rep;
        }
    }
    return rep;
}

}  // namespace eco
