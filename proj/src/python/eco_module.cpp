#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "eco/io.hpp"
#include "eco/projection.hpp"
#include "eco/rollout.hpp"

namespace py = pybind11;
using namespace eco;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vec to_vec(const NpArray& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D float64 array");
    const double* p = a.data();
    return Vec(p, p + a.shape(0));
}

Matrix to_matrix(const NpArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D float64 array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
    return m;
}

py::array from_vec(const Vec& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

py::array from_matrix(const Matrix& m) {
    py::array_t<double> a({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols)});
    std::copy(m.data.begin(), m.data.end(), a.mutable_data());
    return a;
}

Trajectory make_traj(const NpArray& states, double dt_sample, std::string tag) {
    Trajectory t;
    t.states = to_matrix(states);
    t.dt_sample = dt_sample;
    t.system_tag = std::move(tag);
    return t;
}

py::object opt_int(const std::optional<std::size_t>& v) {
    return v ? py::cast(*v) : py::none();
}

py::dict rollout_dict(const TrainState& model, const Vec& w0, std::size_t steps) {
    RolloutResult res;
    {
        py::gil_scoped_release release;
        res = rollout(model, w0, steps);
    }
    py::dict d;
    d["states"] = from_matrix(res.trajectory.states);
    d["energy_trace"] = from_vec(res.energy_trace);
    d["bounded"] = res.bounded;
    d["entry_step"] = opt_int(res.entry_step);
    d["blowup_step"] = opt_int(res.blowup_step);
    d["max_post_entry_energy"] = res.max_post_entry_energy;
    if (model.projection_enabled) {
        const DissipativityReport rep = verify_dissipativity(res, model.energy);
        d["dissipativity_pass"] = rep.pass;
        d["violation"] = rep.violation;
        d["entry_bound"] = rep.entry_bound;
    }
    return d;
}

TrainState run_train(const std::vector<NpArray>& data, std::optional<TrainState> start,
                     std::vector<std::size_t> hidden, const std::string& activation,
                     const std::string& q_mode, double alpha, double c, double k,
                     std::size_t epochs, std::size_t batch, double lr, double lambda_vol,
                     std::uint64_t seed, bool projection, bool stop_grad_gamma, double grad_clip,
                     double energy_lr_scale, std::size_t skip, const std::string& system_tag,
                     bool verbose) {
    if (data.empty()) throw std::invalid_argument("train: no trajectories given");
    std::vector<Trajectory> trajs;
    trajs.reserve(data.size());
    for (const auto& a : data) trajs.push_back(make_traj(a, 0.0, system_tag));
    const PairDataset pairs = build_pairs(trajs, skip);
    const std::size_t n = pairs.inputs.cols;

    TrainConfig cfg;
    cfg.lambda_vol = lambda_vol;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.seed = seed;
    cfg.projection_enabled = projection;
    cfg.stop_grad_gamma = stop_grad_gamma;
    cfg.grad_clip_norm = grad_clip;
    cfg.energy_lr_scale = energy_lr_scale;
    cfg.verbose = verbose;

    TrainState state = [&] {
        if (start) return std::move(*start);
        std::vector<std::size_t> layers;
        layers.push_back(n);
        layers.insert(layers.end(), hidden.begin(), hidden.end());
        layers.push_back(n);
        const QMode qmode = q_mode == "auto" ? (n > 16 ? QMode::diag : QMode::full)
                                             : qmode_from_string(q_mode);
        TrainState s = init_train_state(pairs, std::move(layers),
                                        activation_from_string(activation), qmode,
                                        EnergyHyper{alpha, c, k}, seed, projection);
        s.system_tag = system_tag;
        return s;
    }();

    py::gil_scoped_release release;
    return train(cfg, pairs, std::move(state));
}

py::dict report_dict(const MetricsReport& rep) {
    py::dict d;
    d["kl_physical"] = rep.kl_physical;
    d["kl_physical_per_dim"] = from_vec(rep.kl_physical_per_dim);
    d["kl_pca"] = rep.kl_pca;
    d["log_spectral_distance"] =
        rep.log_spectral_distance ? py::cast(*rep.log_spectral_distance) : py::none();
    d["bounded"] = rep.bounded;
    d["truth_rows"] = rep.truth_rows;
    d["pred_rows"] = rep.pred_rows;
    d["containment_fraction"] =
        rep.containment_fraction ? py::cast(*rep.containment_fraction) : py::none();
    return d;
}

}  // namespace

PYBIND11_MODULE(_eco, m) {
    m.doc() = "energy-constrained operator toolkit: learned emulators with provable boundedness";

    m.def("alpha_threshold", &alpha_threshold, py::arg("k"),
          "largest admissible contraction factor for gate sharpness k (Theorem 1)");
    m.def("lemma1_certificate", &lemma1_certificate, py::arg("k"), py::arg("b"),
          "certified post-projection energy cap (1+delta)^2 b");

    py::class_<Trajectory>(m, "Trajectory")
        .def(py::init([](const NpArray& states, double dt_sample, const std::string& tag) {
                 return make_traj(states, dt_sample, tag);
             }),
             py::arg("states"), py::arg("dt_sample") = 0.0, py::arg("system_tag") = "")
        .def_property_readonly("states",
                               [](const Trajectory& t) { return from_matrix(t.states); })
        .def_readonly("dt_sample", &Trajectory::dt_sample)
        .def_readonly("system_tag", &Trajectory::system_tag)
        .def("__repr__", [](const Trajectory& t) {
            return "Trajectory(tag='" + t.system_tag + "', rows=" + std::to_string(t.states.rows) +
                   ", dim=" + std::to_string(t.states.cols) + ")";
        });

    m.def(
        "simulate_lorenz",
        [](double duration, std::uint64_t seed, py::object w0, double dt_sample,
           double dt_internal) {
            const Vec start = w0.is_none() ? default_lorenz_w0(seed) : to_vec(w0.cast<NpArray>());
            py::gil_scoped_release release;
            return simulate_lorenz(LorenzParams{}, start, duration, dt_sample, dt_internal);
        },
        py::arg("duration"), py::arg("seed") = 0, py::arg("w0") = py::none(),
        py::arg("dt_sample") = 0.05, py::arg("dt_internal") = 0.005);

    m.def(
        "simulate_ks",
        [](double duration, std::uint64_t seed, std::size_t grid_points, double dt_internal,
           double snapshot_interval) {
            KsConfig cfg;
            cfg.grid_points = grid_points;
            cfg.dt_internal = dt_internal;
            cfg.snapshot_interval = snapshot_interval;
            py::gil_scoped_release release;
            return simulate_ks(cfg, seed, duration);
        },
        py::arg("duration"), py::arg("seed") = 0, py::arg("grid_points") = 128,
        py::arg("dt_internal") = 0.25, py::arg("snapshot_interval") = 1.0);

    m.def("read_trajectory", &read_trajectory, py::arg("path"));
    m.def("write_trajectory", &write_trajectory, py::arg("path"), py::arg("trajectory"));

    py::class_<TrainState>(m, "Model")
        .def_property_readonly("epoch", [](const TrainState& s) { return s.epoch; })
        .def_property_readonly("projection_enabled",
                               [](const TrainState& s) { return s.projection_enabled; })
        .def_property_readonly("system_tag", [](const TrainState& s) { return s.system_tag; })
        .def_property_readonly("param_count",
                               [](const TrainState& s) { return total_param_count(s); })
        .def_property_readonly("mse_history",
                               [](const TrainState& s) { return from_vec(s.mse_history); })
        .def_property_readonly("vol_history",
                               [](const TrainState& s) { return from_vec(s.vol_history); })
        .def_property_readonly("layer_sizes",
                               [](const TrainState& s) { return s.emulator.layer_sizes; })
        .def_property_readonly("hyper",
                               [](const TrainState& s) {
                                   py::dict d;
                                   d["alpha"] = s.energy.hyper().alpha;
                                   d["c"] = s.energy.hyper().c;
                                   d["k"] = s.energy.hyper().k;
                                   return d;
                               })
        .def_property_readonly("energy_center",
                               [](const TrainState& s) { return from_vec(s.energy.center()); })
        .def("predict",
             [](const TrainState& s, const NpArray& w) { return from_vec(s.predict(to_vec(w))); },
             py::arg("w"), "one constrained step G*(w)")
        .def("predict_raw",
             [](const TrainState& s, const NpArray& w) {
                 return from_vec(s.predict_raw(to_vec(w)));
             },
             py::arg("w"), "one unconstrained emulator step G_hat(w)")
        .def("energy_eval",
             [](const TrainState& s, const NpArray& w) { return s.energy.eval(to_vec(w)); },
             py::arg("w"), "V(w) = (w - w_c)^T Q (w - w_c)")
        .def("project",
             [](const TrainState& s, const NpArray& w_t, const NpArray& w_hat) {
                 const ProjectionRecord rec =
                     dissipative_project(s.energy, to_vec(w_t), to_vec(w_hat), false);
                 py::dict d;
                 d["w_star"] = from_vec(rec.w_star);
                 d["w_bar"] = from_vec(rec.w_bar);
                 d["gamma"] = rec.gamma;
                 d["b"] = rec.b;
                 d["V_input"] = rec.V_input;
                 d["V_hat"] = rec.V_hat;
                 d["guard_active"] = rec.guard_active;
                 return d;
             },
             py::arg("w_t"), py::arg("w_hat"), "dissipative projection of a proposed step")
        .def("rollout",
             [](const TrainState& s, const NpArray& w0, std::size_t steps) {
                 return rollout_dict(s, to_vec(w0), steps);
             },
             py::arg("w0"), py::arg("steps"))
        .def("save",
             [](const TrainState& s, const std::string& path, bool include_optimizer) {
                 save_checkpoint(path, s, include_optimizer);
             },
             py::arg("path"), py::arg("include_optimizer") = true)
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("__repr__", [](const TrainState& s) {
            return "Model(tag='" + s.system_tag + "', params=" +
                   std::to_string(total_param_count(s)) + ", epoch=" + std::to_string(s.epoch) +
                   ", projection=" + (s.projection_enabled ? "on" : "off") + ")";
        });

    m.def("train", &run_train, py::arg("data"), py::kw_only(), py::arg("model") = py::none(),
          py::arg("hidden") = std::vector<std::size_t>{32, 32}, py::arg("activation") = "tanh",
          py::arg("q_mode") = "auto", py::arg("alpha") = 0.99, py::arg("c") = 1000.0,
          py::arg("k") = 100.0, py::arg("epochs") = 50, py::arg("batch") = 32,
          py::arg("lr") = 1e-3, py::arg("lambda_vol") = 1e-4, py::arg("seed") = 0,
          py::arg("projection") = true, py::arg("stop_grad_gamma") = false,
          py::arg("grad_clip") = 10.0, py::arg("energy_lr_scale") = 1.0, py::arg("skip") = 0,
          py::arg("system_tag") = "", py::arg("verbose") = false,
          "fit an emulator + energy on a list of trajectory arrays; pass model= to continue");

    m.def(
        "evaluate",
        [](const NpArray& truth, const NpArray& pred, std::size_t bins, std::size_t pca_bins,
           std::size_t transient, double lsd_p, py::object model) {
            MetricsOptions opt;
            opt.bins_1d = bins;
            opt.bins_pca = pca_bins;
            opt.transient = transient;
            opt.lsd_p = lsd_p;
            const Trajectory t = make_traj(truth, 0.0, "truth");
            const Trajectory p = make_traj(pred, 0.0, "pred");
            const QuadraticEnergy* energy =
                model.is_none() ? nullptr : &model.cast<const TrainState&>().energy;
            return report_dict(evaluate(t, p, opt, energy));
        },
        py::arg("truth"), py::arg("pred"), py::kw_only(), py::arg("bins") = 100,
        py::arg("pca_bins") = 50, py::arg("transient") = 50, py::arg("lsd_p") = 2.0,
        py::arg("model") = py::none(),
        "long-run climate statistics of a predicted trajectory against the truth");
}
