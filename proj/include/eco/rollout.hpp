#pragma once

#include <optional>
#include <string>

#include "eco/training.hpp"

namespace eco {

struct RolloutResult {
    Trajectory trajectory;  // row 0 is w0; truncated before the blowup state
    Vec energy_trace;       // V(w*_t) for every stored row
    std::optional<std::size_t> entry_step;  // first t with V <= c
    double max_post_entry_energy = 0.0;
    bool bounded = true;
    std::optional<std::size_t> blowup_step;  // baseline blowup index, if any
};

/// Iterates w_{t+1} = G*(w_t). With projection disabled, any component with
/// |x| > 1e8 or non-finite is recorded as a blowup (flagged + truncated),
/// never an exception.
RolloutResult rollout(const TrainState& model, const Vec& w0, std::size_t steps);

struct DissipativityReport {
    bool pass = true;
    std::optional<std::size_t> first_violation_step;
    std::string violation;         // which condition failed
    std::size_t entry_bound = 0;   // ceil(log_alpha(c / V(w0))) when V(w0) > c
};

/// Checks, with per-step delta from b_t = alpha*max(V_t, c):
///   (a) V_t >  c: V_{t+1} <= (1+delta_t)^2 alpha V_t
///   (b) V_t <= c: V_{t+1} <= (1+delta_t)^2 alpha c
///   (c) entry_step <= ceil(log_alpha(c / V_0)) when V_0 > c
DissipativityReport verify_dissipativity(const RolloutResult& result,
                                         const QuadraticEnergy& energy);

}  // namespace eco
