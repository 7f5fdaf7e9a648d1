#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "eco/dynamics.hpp"
#include "eco/io.hpp"
#include "eco/metrics.hpp"
#include "eco/projection.hpp"
#include "eco/rollout.hpp"
#include "eco/rng.hpp"
#include "eco/training.hpp"

namespace {

using namespace eco;

std::string indexed_path(const std::string& path, std::size_t index, std::size_t count) {
    if (count <= 1) return path;
    const auto dot = path.rfind('.');
    const auto slash = path.rfind('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    const std::string stem = has_ext ? path.substr(0, dot) : path;
    const std::string ext = has_ext ? path.substr(dot) : "";
    return stem + "_" + std::to_string(index) + ext;
}

struct SimulateArgs {
    std::string system = "lorenz";
    double duration = 2000.0;
    double dt_sample = -1.0;
    double dt_internal = -1.0;
    std::size_t resolution = 128;
    std::size_t count = 1;
    std::string out = "trajectory.eco";
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

int run_simulate(const SimulateArgs& a) {
    const bool is_ks = a.system == "ks";
    const double dt_sample = a.dt_sample > 0 ? a.dt_sample : (is_ks ? 1.0 : 0.05);
    const double dt_internal = a.dt_internal > 0 ? a.dt_internal : (is_ks ? 0.25 : 0.005);

    std::printf("simulate: system=%s duration=%g dt_sample=%g dt_internal=%g count=%zu seed=%llu\n",
                a.system.c_str(), a.duration, dt_sample, dt_internal, a.count,
                static_cast<unsigned long long>(a.seed));

    std::vector<Trajectory> trajs(a.count);
    std::vector<std::uint64_t> seeds(a.count);
    for (std::size_t i = 0; i < a.count; ++i) seeds[i] = derive_seed(a.seed, i);

    const std::size_t workers = std::max<std::size_t>(1, std::min(a.threads, a.count));
    std::vector<std::exception_ptr> errors(workers);
    auto chunk = [&](std::size_t wid) {
        try {
            for (std::size_t i = wid; i < a.count; i += workers) {
                if (is_ks) {
                    KsConfig cfg;
                    cfg.grid_points = a.resolution;
                    cfg.dt_internal = dt_internal;
                    cfg.snapshot_interval = dt_sample;
                    trajs[i] = simulate_ks(cfg, seeds[i], a.duration);
                } else {
                    trajs[i] = simulate_lorenz(LorenzParams{}, default_lorenz_w0(seeds[i]),
                                               a.duration, dt_sample, dt_internal);
                }
            }
        } catch (...) {
            errors[wid] = std::current_exception();
        }
    };
    if (workers == 1) {
        chunk(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(chunk, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t i = 0; i < a.count; ++i) {
        const std::string path = indexed_path(a.out, i, a.count);
        write_trajectory(path, trajs[i]);
        const auto [lo, hi] =
            std::minmax_element(trajs[i].states.data.begin(), trajs[i].states.data.end());
        std::printf("  wrote %s: seed=%llu states=%zu dim=%zu min=%.6g max=%.6g\n", path.c_str(),
                    static_cast<unsigned long long>(seeds[i]), trajs[i].states.rows,
                    trajs[i].states.cols, *lo, *hi);
    }
    return 0;
}

struct TrainArgs {
    std::vector<std::string> data;
    std::string out = "model.ckpt";
    std::size_t epochs = 50;
    std::size_t batch = 32;
    double lr = 1e-3;
    double lambda = -1.0;
    double alpha = 0.99;
    double c = 1000.0;
    double k = 100.0;
    bool no_projection = false;
    std::string q_mode = "auto";
    std::string hidden;
    std::string activation;
    std::size_t skip = 0;
    std::string resume;
    std::size_t ckpt_interval = 0;
    bool stop_grad_gamma = false;
    double grad_clip = 10.0;
    double energy_lr_scale = 1.0;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

std::vector<std::size_t> parse_hidden(const std::string& csv) {
    std::vector<std::size_t> sizes;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const auto comma = csv.find(',', pos);
        const std::string tok = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                           : comma - pos);
        sizes.push_back(static_cast<std::size_t>(std::stoull(tok)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return sizes;
}

int run_train(const TrainArgs& a) {
    std::vector<Trajectory> trajs;
    trajs.reserve(a.data.size());
    for (const auto& p : a.data) trajs.push_back(read_trajectory(p));
    const PairDataset pairs = build_pairs(trajs, a.skip);
    const std::string tag = trajs.front().system_tag;
    const bool is_ks = tag == "ks";
    const std::size_t n = pairs.inputs.cols;

    TrainConfig cfg;
    cfg.lambda_vol = a.lambda >= 0 ? a.lambda : (is_ks ? 1e-6 : 1e-4);
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    cfg.projection_enabled = !a.no_projection;
    cfg.grad_clip_norm = a.grad_clip;
    cfg.stop_grad_gamma = a.stop_grad_gamma;
    cfg.energy_lr_scale = a.energy_lr_scale;
    cfg.threads = a.threads;
    cfg.verbose = true;

    TrainState state = [&] {
        if (!a.resume.empty()) return load_checkpoint(a.resume);
        std::vector<std::size_t> hidden =
            a.hidden.empty()
                ? (is_ks ? std::vector<std::size_t>{512, 512, 512}
                         : std::vector<std::size_t>{150, 150, 150, 150, 150, 150})
                : parse_hidden(a.hidden);
        std::vector<std::size_t> layers;
        layers.push_back(n);
        layers.insert(layers.end(), hidden.begin(), hidden.end());
        layers.push_back(n);
        const Activation act = activation_from_string(
            a.activation.empty() ? (is_ks ? "gelu" : "tanh") : a.activation);
        const QMode qmode = a.q_mode == "auto" ? (n > 16 ? QMode::diag : QMode::full)
                                               : qmode_from_string(a.q_mode);
        TrainState s =
            init_train_state(pairs, std::move(layers), act, qmode,
                             EnergyHyper{a.alpha, a.c, a.k}, a.seed, cfg.projection_enabled);
        s.system_tag = tag;
        return s;
    }();

    std::printf(
        "train: pairs=%zu dim=%zu tag=%s seed=%llu epochs=%zu batch=%zu lr=%g lambda=%g "
        "alpha=%g c=%g k=%g projection=%s params=%zu start_epoch=%zu\n",
        pairs.size(), n, tag.c_str(), static_cast<unsigned long long>(a.seed), a.epochs, a.batch,
        a.lr, cfg.lambda_vol, state.energy.hyper().alpha, state.energy.hyper().c,
        state.energy.hyper().k, state.projection_enabled ? "on" : "off", total_param_count(state),
        state.epoch);

    EpochCallback on_epoch;
    if (a.ckpt_interval > 0)
        on_epoch = [&](const TrainState& s, std::size_t epoch) {
            if (epoch % a.ckpt_interval == 0) save_checkpoint(a.out, s);
        };
    state = train(cfg, pairs, std::move(state), on_epoch);
    save_checkpoint(a.out, state);
    std::printf("saved %s: epoch=%zu mse=%.6e vol=%.6e\n", a.out.c_str(), state.epoch,
                state.mse_history.empty() ? 0.0 : state.mse_history.back(),
                state.vol_history.empty() ? 0.0 : state.vol_history.back());
    return 0;
}

struct RolloutArgs {
    std::string ckpt;
    std::string init = "random";
    std::size_t steps = 40000;
    std::string out;
    std::string trace_out;
    std::uint64_t seed = 0;
};

Vec resolve_init(const TrainState& model, const std::string& spec, std::uint64_t base_seed,
                 std::uint64_t* used_seed) {
    const std::size_t n = model.energy.dim();
    if (spec == "random" || spec.rfind("random:", 0) == 0) {
        const std::uint64_t s =
            spec == "random" ? base_seed : std::stoull(spec.substr(std::string("random:").size()));
        *used_seed = s;
        if (model.system_tag == "lorenz63") return default_lorenz_w0(s);
        if (model.system_tag == "ks") {
            KsConfig cfg;
            cfg.grid_points = n;
            return ks_random_ic(cfg, s);
        }
        // Unknown system: a random direction on the invariant-set boundary.
        Rng rng(s);
        Vec dir(n);
        for (std::size_t j = 0; j < n; ++j) dir[j] = model.energy.center()[j] + rng.normal();
        return equality_project(model.energy, dir, model.energy.hyper().c);
    }
    const Trajectory t = read_trajectory(spec);
    check_dim(t.states.cols, n, "rollout init");
    const auto last = t.states.row(t.states.rows - 1);
    return Vec(last.begin(), last.end());
}

int run_rollout(const RolloutArgs& a) {
    const TrainState model = load_checkpoint(a.ckpt);
    std::uint64_t used_seed = a.seed;
    const Vec w0 = resolve_init(model, a.init, a.seed, &used_seed);

    std::printf("rollout: ckpt=%s init=%s seed=%llu steps=%zu projection=%s\n", a.ckpt.c_str(),
                a.init.c_str(), static_cast<unsigned long long>(used_seed), a.steps,
                model.projection_enabled ? "on" : "off");

    const RolloutResult res = rollout(model, w0, a.steps);
    if (!a.out.empty()) write_trajectory(a.out, res.trajectory);
    if (!a.trace_out.empty()) export_energy_trace_csv(res.energy_trace, a.trace_out);

    std::printf("  bounded=%s rows=%zu V0=%.6g", res.bounded ? "true" : "false",
                res.trajectory.states.rows, res.energy_trace.front());
    if (res.blowup_step) std::printf(" blowup_step=%zu", *res.blowup_step);
    if (res.entry_step)
        std::printf(" entry_step=%zu max_post_entry_V=%.6g", *res.entry_step,
                    res.max_post_entry_energy);
    std::printf("\n");

    if (model.projection_enabled) {
        const DissipativityReport rep = verify_dissipativity(res, model.energy);
        if (rep.pass) {
            std::printf("  dissipativity: PASS (entry bound %zu steps)\n", rep.entry_bound);
        } else {
            std::printf("  dissipativity: FAIL at step %zu: %s\n",
                        rep.first_violation_step.value_or(0), rep.violation.c_str());
            return 2;
        }
    } else if (!res.bounded) {
        std::printf("  baseline blowup flagged (not an error)\n");
    }
    return 0;
}

struct EvalArgs {
    std::string truth;
    std::string pred;
    std::string report;
    std::size_t bins = 100;
    std::size_t pca_bins = 50;
    std::size_t transient = 50;
    std::string ckpt;
};

int run_eval(const EvalArgs& a) {
    const Trajectory truth = read_trajectory(a.truth);
    const Trajectory pred = read_trajectory(a.pred);
    MetricsOptions opt;
    opt.bins_1d = a.bins;
    opt.bins_pca = a.pca_bins;
    opt.transient = a.transient;

    std::optional<TrainState> state;
    const QuadraticEnergy* energy = nullptr;
    if (!a.ckpt.empty()) {
        state = load_checkpoint(a.ckpt);
        energy = &state->energy;
    }
    const MetricsReport report = evaluate(truth, pred, opt, energy);
    const std::string json = report_to_json(report);
    std::printf("%s\n", json.c_str());
    if (!a.report.empty()) {
        std::ofstream os(a.report);
        if (!os) throw std::runtime_error("eval: cannot open " + a.report);
        os << json << "\n";
    }
    return 0;
}

struct ExportArgs {
    std::string kind;
    std::string in;
    std::string out;
    std::string ckpt;
    std::string basis;
};

int run_export(const ExportArgs& a) {
    export_csv(export_kind_from_string(a.kind), a.in, a.out, a.ckpt, a.basis);
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

std::string check_power_of_two(const std::string& s) {
    unsigned long long v = 0;
    try {
        v = std::stoull(s);
    } catch (...) {
        return "not an integer: " + s;
    }
    if (v < 4 || (v & (v - 1)) != 0) return "must be a power of two >= 4, got " + s;
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eco: energy-constrained operator toolkit for dissipative chaotic systems"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* sim_cmd =
        app.add_subcommand("simulate", "integrate a reference system and write trajectories");
    sim_cmd->add_option("--system", sim.system, "dynamical system")
        ->check(CLI::IsMember({"lorenz", "lorenz63", "ks"}));
    sim_cmd->add_option("--duration", sim.duration, "integration time in seconds")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--dt-sample", sim.dt_sample,
                        "snapshot interval; <=0 selects 0.05 (lorenz) / 1.0 (ks)");
    sim_cmd->add_option("--dt-internal", sim.dt_internal,
                        "integrator step; <=0 selects 0.005 (lorenz) / 0.25 (ks)");
    sim_cmd->add_option("--resolution", sim.resolution, "ks grid points (power of two)")
        ->check(check_power_of_two);
    sim_cmd->add_option("--count", sim.count, "number of independent trajectories")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--out", sim.out, "output path (indexed when --count > 1)");
    sim_cmd->add_option("--seed", sim.seed, "base seed; trajectory i uses a derived sub-seed");
    sim_cmd->add_option("--threads", sim.threads, "max worker threads")
        ->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "fit an emulator + energy on trajectory data");
    tr_cmd->add_option("--data", tr.data, "trajectory files (repeatable)")->required();
    tr_cmd->add_option("--out", tr.out, "checkpoint output path");
    tr_cmd->add_option("--epochs", tr.epochs, "epochs to run (additional when resuming)");
    tr_cmd->add_option("--batch", tr.batch, "minibatch size")->check(CLI::PositiveNumber);
    tr_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    tr_cmd->add_option("--lambda", tr.lambda,
                       "volume penalty weight; <0 selects 1e-4 (lorenz) / 1e-6 (ks)");
    tr_cmd->add_option("--alpha", tr.alpha, "contraction factor (Theorem 1: alpha < threshold)");
    tr_cmd->add_option("--c", tr.c, "invariant level (Theorem 1: c > 1/alpha)");
    tr_cmd->add_option("--k", tr.k, "projection gate sharpness");
    tr_cmd->add_flag("--no-projection", tr.no_projection, "train an unconstrained baseline");
    tr_cmd->add_option("--q-mode", tr.q_mode,
                       "energy quadratic form; auto = full for n <= 16, diag above")
        ->check(CLI::IsMember({"auto", "diag", "full"}));
    tr_cmd->add_option("--hidden", tr.hidden,
                       "comma-separated hidden sizes; empty selects 150x6 (lorenz) / 512x3 (ks)");
    tr_cmd->add_option("--activation", tr.activation,
                       "hidden activation; empty selects tanh (lorenz) / gelu (ks)");
    tr_cmd->add_option("--skip", tr.skip, "transient snapshots dropped per trajectory");
    tr_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
    tr_cmd->add_option("--ckpt-interval", tr.ckpt_interval,
                       "save every N epochs (0 = final save only)");
    tr_cmd->add_flag("--stop-grad-gamma", tr.stop_grad_gamma,
                     "block gradient flow through the blend gate");
    tr_cmd->add_option("--grad-clip", tr.grad_clip, "global gradient norm clip (<=0 disables)");
    tr_cmd->add_option("--energy-lr-scale", tr.energy_lr_scale,
                       "learning-rate multiplier for energy parameters");
    tr_cmd->add_option("--seed", tr.seed, "seed for init and batch shuffling");
    tr_cmd->add_option("--threads", tr.threads, "max worker threads")->check(CLI::PositiveNumber);

    RolloutArgs ro;
    auto* ro_cmd = app.add_subcommand("rollout", "iterate a trained operator from an initial state");
    ro_cmd->add_option("--ckpt", ro.ckpt, "checkpoint path")->required();
    ro_cmd->add_option("--init", ro.init,
                       "'random', 'random:SEED', or a trajectory file (its final state is used)");
    ro_cmd->add_option("--steps", ro.steps, "number of operator applications")
        ->check(CLI::PositiveNumber);
    ro_cmd->add_option("--out", ro.out, "trajectory output path");
    ro_cmd->add_option("--trace-out", ro.trace_out, "energy trace CSV path");
    ro_cmd->add_option("--seed", ro.seed, "seed used when --init is plain 'random'");

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "long-run statistics of a predicted trajectory");
    ev_cmd->add_option("--truth", ev.truth, "reference trajectory file")->required();
    ev_cmd->add_option("--pred", ev.pred, "predicted trajectory file")->required();
    ev_cmd->add_option("--report", ev.report, "write the JSON report here too");
    ev_cmd->add_option("--bins", ev.bins, "per-coordinate histogram bins")
        ->check(CLI::PositiveNumber);
    ev_cmd->add_option("--pca-bins", ev.pca_bins, "bins per PCA axis")
        ->check(CLI::PositiveNumber);
    ev_cmd->add_option("--transient", ev.transient, "snapshots discarded before statistics");
    ev_cmd->add_option("--ckpt", ev.ckpt, "checkpoint for invariant-set containment");

    ExportArgs ex;
    auto* ex_cmd = app.add_subcommand("export", "convert artifacts to CSV for plotting");
    ex_cmd->add_option("--kind", ex.kind, "what to export")
        ->required()
        ->check(CLI::IsMember({"trajectory", "energy_trace", "spectrum", "pca_projection",
                               "histogram"}));
    ex_cmd->add_option("--in", ex.in, "input trajectory file")->required();
    ex_cmd->add_option("--out", ex.out, "output CSV path")->required();
    ex_cmd->add_option("--ckpt", ex.ckpt, "checkpoint (required for energy_trace)");
    ex_cmd->add_option("--basis", ex.basis, "trajectory defining the PCA basis (pca_projection)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim_cmd->parsed()) return run_simulate(sim);
        if (tr_cmd->parsed()) return run_train(tr);
        if (ro_cmd->parsed()) return run_rollout(ro);
        if (ev_cmd->parsed()) return run_eval(ev);
        if (ex_cmd->parsed()) return run_export(ex);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
