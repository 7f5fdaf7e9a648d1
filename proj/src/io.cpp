#include "eco/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "eco/numerics.hpp"

namespace eco {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'O', 'T', 'R', 'A', 'J', '1'};
constexpr int kCheckpointVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t len) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
}

void put_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 4);
}

void put_u64le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

void put_f64le(std::ostream& os, double x) { put_u64le(os, std::bit_cast<std::uint64_t>(x)); }

bool get_bytes(std::istream& is, void* p, std::size_t len) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
    return static_cast<std::size_t>(is.gcount()) == len;
}

std::uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    if (!get_bytes(is, b, 4)) throw std::runtime_error("trajectory file: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64le(std::istream& is) {
    unsigned char b[8];
    if (!get_bytes(is, b, 8)) throw std::runtime_error("trajectory file: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64le(std::istream& is) { return std::bit_cast<double>(get_u64le(is)); }

}  // namespace

void write_trajectory(const std::string& path, const Trajectory& traj) {
    if (traj.system_tag.size() > 16)
        throw std::invalid_argument("write_trajectory: system tag exceeds 16 bytes");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_trajectory: cannot open " + path);

    put_bytes(os, kMagic, 8);
    put_u32le(os, static_cast<std::uint32_t>(traj.states.cols));
    put_u64le(os, static_cast<std::uint64_t>(traj.states.rows));
    put_f64le(os, traj.dt_sample);
    char tag[16] = {};
    std::memcpy(tag, traj.system_tag.data(), traj.system_tag.size());
    put_bytes(os, tag, 16);
    for (double x : traj.states.data) put_f64le(os, x);
    if (!os) throw std::runtime_error("write_trajectory: write failed for " + path);
}

Trajectory read_trajectory(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_trajectory: cannot open " + path);

    char magic[8];
    if (!get_bytes(is, magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("read_trajectory: bad magic in " + path);
    const std::uint32_t n = get_u32le(is);
    const std::uint64_t t = get_u64le(is);
    const double dt = get_f64le(is);
    char tag[16];
    if (!get_bytes(is, tag, 16)) throw std::runtime_error("trajectory file: truncated header");

    if (n == 0 || t == 0) throw std::runtime_error("read_trajectory: empty dimensions");
    if (t > (std::numeric_limits<std::uint64_t>::max() / 8) / n ||
        t * static_cast<std::uint64_t>(n) >
            static_cast<std::uint64_t>(std::numeric_limits<std::ptrdiff_t>::max() / 8))
        throw std::runtime_error("read_trajectory: dimension overflow");

    Trajectory traj;
    traj.dt_sample = dt;
    traj.system_tag.assign(tag, strnlen(tag, 16));
    traj.states = Matrix(static_cast<std::size_t>(t), n);
    for (double& x : traj.states.data) {
        std::uint64_t v = 0;
        unsigned char b[8];
        if (!get_bytes(is, b, 8))
            throw std::runtime_error("read_trajectory: truncated payload in " + path);
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        x = std::bit_cast<double>(v);
    }
    return traj;
}

namespace {

nlohmann::json vec_json(std::span<const double> v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(x);
    return a;
}

Vec json_vec(const nlohmann::json& a) {
    Vec v;
    v.reserve(a.size());
    for (const auto& x : a) v.push_back(x.get<double>());
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, bool include_optimizer) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["system"] = {{"n", state.energy.dim()}, {"system_tag", state.system_tag}};
    j["normalization"] = {{"mean", vec_json(state.norm.mean)}, {"std", vec_json(state.norm.std)}};

    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t s : state.emulator.layer_sizes) layers.push_back(s);
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t l = 0; l < state.emulator.weights.size(); ++l) {
        weights.push_back(vec_json(state.emulator.weights[l].data));
        biases.push_back(vec_json(state.emulator.biases[l]));
    }
    j["emulator"] = {{"layer_sizes", layers},
                     {"activation", to_string(state.emulator.activation)},
                     {"weights", weights},
                     {"biases", biases}};
    j["energy"] = {{"mode", to_string(state.energy.mode())},
                   {"w_c", vec_json(state.energy.center())},
                   {"theta", vec_json(state.energy.theta())}};
    j["hyper"] = {{"alpha", state.energy.hyper().alpha},
                  {"c", state.energy.hyper().c},
                  {"k", state.energy.hyper().k},
                  {"lambda_vol", state.lambda_vol}};
    j["projection_enabled"] = state.projection_enabled;
    j["training"] = {{"epoch", state.epoch},
                     {"mse_history", vec_json(state.mse_history)},
                     {"vol_history", vec_json(state.vol_history)}};
    if (include_optimizer)
        j["optimizer"] = {{"step", state.adam.step},
                          {"m", vec_json(state.adam.m)},
                          {"v", vec_json(state.adam.v)}};

    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os << j.dump(1) << "\n";
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

TrainState load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: invalid JSON in " + path + ": " + e.what());
    }

    if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: format version mismatch");

    const auto& je = j.at("emulator");
    MlpParams emu;
    for (const auto& s : je.at("layer_sizes")) emu.layer_sizes.push_back(s.get<std::size_t>());
    emu.activation = activation_from_string(je.at("activation").get<std::string>());
    const auto& jw = je.at("weights");
    const auto& jb = je.at("biases");
    if (emu.layer_sizes.size() < 2 || jw.size() + 1 != emu.layer_sizes.size() ||
        jb.size() != jw.size())
        throw std::runtime_error("load_checkpoint: inconsistent emulator layers");
    for (std::size_t l = 0; l + 1 < emu.layer_sizes.size(); ++l) {
        Matrix w(emu.layer_sizes[l + 1], emu.layer_sizes[l]);
        Vec flat = json_vec(jw[l]);
        if (flat.size() != w.data.size())
            throw std::runtime_error("load_checkpoint: weight block size mismatch");
        w.data = std::move(flat);
        emu.weights.push_back(std::move(w));
        Vec b = json_vec(jb[l]);
        if (b.size() != emu.layer_sizes[l + 1])
            throw std::runtime_error("load_checkpoint: bias block size mismatch");
        emu.biases.push_back(std::move(b));
    }

    const auto& jh = j.at("hyper");
    EnergyHyper hyper{jh.at("alpha").get<double>(), jh.at("c").get<double>(),
                      jh.at("k").get<double>()};
    const auto& jen = j.at("energy");
    // QuadraticEnergy's constructor re-validates the Theorem 1 conditions
    QuadraticEnergy energy(qmode_from_string(jen.at("mode").get<std::string>()),
                           json_vec(jen.at("w_c")), json_vec(jen.at("theta")), hyper);
    if (energy.dim() != emu.dim_in() || energy.dim() != emu.dim_out())
        throw std::runtime_error("load_checkpoint: energy/emulator dimension mismatch");

    const auto& jn = j.at("normalization");
    Normalization norm{json_vec(jn.at("mean")), json_vec(jn.at("std"))};
    check_dim(norm.mean.size(), energy.dim(), "load_checkpoint normalization");
    check_dim(norm.std.size(), energy.dim(), "load_checkpoint normalization");

    TrainState state{.emulator = std::move(emu),
                     .norm = std::move(norm),
                     .energy = std::move(energy),
                     .projection_enabled = j.at("projection_enabled").get<bool>(),
                     .lambda_vol = jh.at("lambda_vol").get<double>(),
                     .system_tag = j.at("system").at("system_tag").get<std::string>()};

    const auto& jt = j.at("training");
    state.epoch = jt.at("epoch").get<std::size_t>();
    state.mse_history = json_vec(jt.at("mse_history"));
    state.vol_history = json_vec(jt.at("vol_history"));

    const std::size_t count = total_param_count(state);
    if (j.contains("optimizer")) {
        const auto& jo = j["optimizer"];
        state.adam.step = jo.at("step").get<std::uint64_t>();
        state.adam.m = json_vec(jo.at("m"));
        state.adam.v = json_vec(jo.at("v"));
        if (state.adam.m.size() != count || state.adam.v.size() != count)
            throw std::runtime_error("load_checkpoint: optimizer moment size mismatch");
    } else {
        state.adam.m.assign(count, 0.0);
        state.adam.v.assign(count, 0.0);
    }
    return state;
}

ExportKind export_kind_from_string(const std::string& s) {
    if (s == "trajectory") return ExportKind::trajectory;
    if (s == "energy_trace") return ExportKind::energy_trace;
    if (s == "spectrum") return ExportKind::spectrum;
    if (s == "pca_projection") return ExportKind::pca_projection;
    if (s == "histogram") return ExportKind::histogram;
    throw std::invalid_argument("unknown export kind: " + s);
}

std::string format_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("export_csv: cannot open " + path);
    return os;
}

}  // namespace

void export_trajectory_csv(const Trajectory& traj, const std::string& path) {
    auto os = open_csv(path);
    os << "step";
    for (std::size_t j = 0; j < traj.states.cols; ++j) os << ",w" << j;
    os << "\n";
    for (std::size_t r = 0; r < traj.states.rows; ++r) {
        os << r;
        for (std::size_t j = 0; j < traj.states.cols; ++j)
            os << "," << format_double(traj.states(r, j));
        os << "\n";
    }
}

void export_energy_trace_csv(std::span<const double> trace, const std::string& path) {
    auto os = open_csv(path);
    os << "step,V\n";
    for (std::size_t t = 0; t < trace.size(); ++t) os << t << "," << format_double(trace[t]) << "\n";
}

void export_spectrum_csv(std::span<const double> spectrum, const std::string& path) {
    auto os = open_csv(path);
    os << "mode,power\n";
    for (std::size_t m = 0; m < spectrum.size(); ++m)
        os << m + 1 << "," << format_double(spectrum[m]) << "\n";
}

void export_pca_csv(const Matrix& projected, const std::string& path) {
    check_dim(projected.cols, 2, "export_pca_csv");
    auto os = open_csv(path);
    os << "pc1,pc2\n";
    for (std::size_t r = 0; r < projected.rows; ++r)
        os << format_double(projected(r, 0)) << "," << format_double(projected(r, 1)) << "\n";
}

void export_histogram_csv(std::span<const double> probabilities, const HistogramSpec& spec,
                          const std::string& path) {
    check_dim(probabilities.size(), spec.bin_count, "export_histogram_csv");
    auto os = open_csv(path);
    os << "bin_lo,bin_hi,probability\n";
    const double width = (spec.hi - spec.lo) / static_cast<double>(spec.bin_count);
    for (std::size_t b = 0; b < spec.bin_count; ++b)
        os << format_double(spec.lo + width * static_cast<double>(b)) << ","
           << format_double(spec.lo + width * static_cast<double>(b + 1)) << ","
           << format_double(probabilities[b]) << "\n";
}

void export_csv(ExportKind kind, const std::string& in_path, const std::string& out_path,
                const std::string& ckpt_path, const std::string& basis_path) {
    switch (kind) {
        case ExportKind::trajectory:
            export_trajectory_csv(read_trajectory(in_path), out_path);
            return;
        case ExportKind::energy_trace: {
            if (ckpt_path.empty())
                throw std::invalid_argument("export energy_trace: checkpoint path required");
            const Trajectory traj = read_trajectory(in_path);
            const TrainState state = load_checkpoint(ckpt_path);
            check_dim(traj.states.cols, state.energy.dim(), "export energy_trace");
            Vec trace(traj.states.rows);
            for (std::size_t r = 0; r < traj.states.rows; ++r)
                trace[r] = state.energy.eval(traj.states.row(r));
            export_energy_trace_csv(trace, out_path);
            return;
        }
        case ExportKind::spectrum:
            export_spectrum_csv(power_spectrum(read_trajectory(in_path)), out_path);
            return;
        case ExportKind::pca_projection: {
            const Trajectory traj = read_trajectory(in_path);
            const Trajectory basis =
                basis_path.empty() || basis_path == in_path ? traj : read_trajectory(basis_path);
            const PcaResult pca = top_principal_components(basis.states, 2);
            Matrix proj(traj.states.rows, 2);
            for (std::size_t r = 0; r < traj.states.rows; ++r)
                for (std::size_t cidx = 0; cidx < 2; ++cidx) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < traj.states.cols; ++j)
                        s += (traj.states(r, j) - pca.mean[j]) * pca.components(cidx, j);
                    proj(r, cidx) = s;
                }
            export_pca_csv(proj, out_path);
            return;
        }
        case ExportKind::histogram: {
            const Trajectory traj = read_trajectory(in_path);
            const HistogramSpec spec = histogram_range(traj.states.data, 100);
            export_histogram_csv(histogram_probabilities(traj.states.data, spec), spec, out_path);
            return;
        }
    }
    throw std::invalid_argument("export_csv: unknown kind");
}

}  // namespace eco
