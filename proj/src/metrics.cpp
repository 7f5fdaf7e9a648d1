#include "eco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "eco/numerics.hpp"

namespace eco {

HistogramSpec histogram_range(std::span<const double> values, std::size_t bins, double extend,
                              double eps) {
    if (values.empty()) throw std::invalid_argument("histogram_range: no values");
    double lo = values[0], hi = values[0];
    for (double x : values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double span = hi - lo;
    if (span <= 0.0) span = std::max(1.0, std::abs(lo)) * 1e-9;  // degenerate constant data
    const double margin = 0.5 * extend * span;
    return {bins, lo - margin, hi + margin, eps};
}

Vec histogram_probabilities(std::span<const double> values, const HistogramSpec& spec) {
    if (spec.bin_count < 2) throw std::invalid_argument("histogram: bin_count must be >= 2");
    if (!(spec.lo < spec.hi)) throw std::invalid_argument("histogram: need lo < hi");
    if (values.empty()) throw std::invalid_argument("histogram: no values");

    Vec counts(spec.bin_count, 0.0);
    const double width = (spec.hi - spec.lo) / static_cast<double>(spec.bin_count);
    const auto last = static_cast<std::ptrdiff_t>(spec.bin_count) - 1;
    for (double x : values) {
        auto idx = static_cast<std::ptrdiff_t>(std::floor((x - spec.lo) / width));
        idx = std::clamp<std::ptrdiff_t>(idx, 0, last);  // clip to edge bins
        counts[static_cast<std::size_t>(idx)] += 1.0;
    }
    double total = static_cast<double>(values.size());
    for (double& ci : counts) ci = ci / total + spec.smoothing_eps;
    total = 0.0;
    for (double ci : counts) total += ci;
    for (double& ci : counts) ci /= total;
    return counts;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    check_dim(q.size(), p.size(), "kl_divergence");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] > 0.0) || !(q[i] > 0.0))
            throw std::invalid_argument("kl_divergence: distributions must be strictly positive");
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
        throw std::invalid_argument("kl_divergence: distributions must be normalized");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
    return kl;
}

namespace {

// view of a trajectory's states after the transient discard; at least one row
// always survives
std::span<const double> post_transient(const Trajectory& t, std::size_t transient,
                                       std::size_t& rows_out) {
    const std::size_t skip = std::min(transient, t.states.rows - 1);
    rows_out = t.states.rows - skip;
    return {t.states.data.data() + skip * t.states.cols, rows_out * t.states.cols};
}

void require_compatible(const Trajectory& truth, const Trajectory& pred) {
    if (truth.states.rows == 0 || pred.states.rows == 0)
        throw std::invalid_argument("metrics: empty trajectory");
    check_dim(pred.states.cols, truth.states.cols, "metrics");
    if (!all_finite(pred.states.data))
        throw std::invalid_argument(
            "metrics: pred contains non-finite values; truncate the blowup first");
}

Vec column_of(std::span<const double> pooled, std::size_t cols, std::size_t j) {
    Vec out(pooled.size() / cols);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = pooled[r * cols + j];
    return out;
}

}  // namespace

double kl_physical(const Trajectory& truth, const Trajectory& pred, std::size_t bins,
                   std::size_t transient, double eps) {
    require_compatible(truth, pred);
    std::size_t tr = 0, pr = 0;
    const auto tv = post_transient(truth, transient, tr);
    const auto pv = post_transient(pred, transient, pr);
    const HistogramSpec spec = histogram_range(tv, bins, 0.05, eps);
    return kl_divergence(histogram_probabilities(tv, spec), histogram_probabilities(pv, spec));
}

Vec kl_physical_per_dim(const Trajectory& truth, const Trajectory& pred, std::size_t bins,
                        std::size_t transient, double eps) {
    require_compatible(truth, pred);
    std::size_t tr = 0, pr = 0;
    const auto tv = post_transient(truth, transient, tr);
    const auto pv = post_transient(pred, transient, pr);
    const std::size_t n = truth.states.cols;
    Vec out(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Vec tc = column_of(tv, n, j);
        const Vec pc = column_of(pv, n, j);
        const HistogramSpec spec = histogram_range(tc, bins, 0.05, eps);
        out[j] = kl_divergence(histogram_probabilities(tc, spec),
                               histogram_probabilities(pc, spec));
    }
    return out;
}

double kl_pca(const Trajectory& truth, const Trajectory& pred, std::size_t bins_per_axis,
              std::size_t transient, double eps) {
    require_compatible(truth, pred);
    std::size_t tr = 0, pr = 0;
    const auto tv = post_transient(truth, transient, tr);
    const auto pv = post_transient(pred, transient, pr);
    const std::size_t n = truth.states.cols;

    Matrix tmat(tr, n);
    std::copy(tv.begin(), tv.end(), tmat.data.begin());
    const PcaResult pca = top_principal_components(tmat, 2);

    // project pred with the truth's components and centering
    Matrix pproj(pr, 2);
    for (std::size_t r = 0; r < pr; ++r)
        for (std::size_t cidx = 0; cidx < 2; ++cidx) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += (pv[r * n + j] - pca.mean[j]) * pca.components(cidx, j);
            pproj(r, cidx) = s;
        }

    HistogramSpec ax[2];
    for (std::size_t cidx = 0; cidx < 2; ++cidx) {
        const Vec col = column_of(pca.projected.data, 2, cidx);
        ax[cidx] = histogram_range(col, bins_per_axis, 0.10, eps);  // 5% margin per side
    }

    auto hist2d = [&](const Matrix& proj) {
        Vec counts(bins_per_axis * bins_per_axis, 0.0);
        const double w0 = (ax[0].hi - ax[0].lo) / static_cast<double>(bins_per_axis);
        const double w1 = (ax[1].hi - ax[1].lo) / static_cast<double>(bins_per_axis);
        const auto last = static_cast<std::ptrdiff_t>(bins_per_axis) - 1;
        for (std::size_t r = 0; r < proj.rows; ++r) {
            auto i0 = static_cast<std::ptrdiff_t>(std::floor((proj(r, 0) - ax[0].lo) / w0));
            auto i1 = static_cast<std::ptrdiff_t>(std::floor((proj(r, 1) - ax[1].lo) / w1));
            i0 = std::clamp<std::ptrdiff_t>(i0, 0, last);
            i1 = std::clamp<std::ptrdiff_t>(i1, 0, last);
            counts[static_cast<std::size_t>(i0) * bins_per_axis + static_cast<std::size_t>(i1)] +=
                1.0;
        }
        double total = static_cast<double>(proj.rows);
        for (double& ci : counts) ci = ci / total + eps;
        total = 0.0;
        for (double ci : counts) total += ci;
        for (double& ci : counts) ci /= total;
        return counts;
    };

    return kl_divergence(hist2d(pca.projected), hist2d(pproj));
}

Vec power_spectrum(const Trajectory& traj) {
    const std::size_t n = traj.states.cols;
    if (!is_power_of_two(n))
        throw std::invalid_argument("power_spectrum: state dimension must be a power of two");
    const std::size_t modes = n / 2;
    Vec power(modes, 0.0);
    for (std::size_t r = 0; r < traj.states.rows; ++r) {
        const ComplexSpectrum s = fft_forward(traj.states.row(r));
        for (std::size_t m = 1; m <= modes; ++m)
            power[m - 1] += s.re[m] * s.re[m] + s.im[m] * s.im[m];
    }
    for (double& p : power) p /= static_cast<double>(traj.states.rows);
    return power;
}

double log_spectral_distance(std::span<const double> truth_spectrum,
                             std::span<const double> pred_spectrum, double p) {
    check_dim(pred_spectrum.size(), truth_spectrum.size(), "log_spectral_distance");
    if (!(p > 0.0)) throw std::invalid_argument("log_spectral_distance: p must be positive");
    const std::size_t n = truth_spectrum.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::log(std::max(truth_spectrum[i], 1e-300));
        const double b = std::log(std::max(pred_spectrum[i], 1e-300));
        acc += std::pow(std::abs(a - b), p);
    }
    return std::pow(acc / static_cast<double>(n), 1.0 / p);
}

MetricsReport evaluate(const Trajectory& truth, const Trajectory& pred,
                       const MetricsOptions& options, const QuadraticEnergy* energy) {
    if (truth.states.rows == 0 || pred.states.rows == 0)
        throw std::invalid_argument("evaluate: empty trajectory");
    check_dim(pred.states.cols, truth.states.cols, "evaluate");

    // truncate pred at its first blowup row
    const std::size_t n = pred.states.cols;
    std::size_t good_rows = pred.states.rows;
    for (std::size_t r = 0; r < pred.states.rows; ++r) {
        bool bad = false;
        for (double x : pred.states.row(r))
            if (!std::isfinite(x) || std::abs(x) > 1e8) {
                bad = true;
                break;
            }
        if (bad) {
            good_rows = r;
            break;
        }
    }

    MetricsReport rep;
    rep.options = options;
    rep.bounded = good_rows == pred.states.rows;
    if (good_rows == 0) throw std::invalid_argument("evaluate: pred blows up at its first state");

    Trajectory pred_prefix;
    const Trajectory* pred_used = &pred;
    if (!rep.bounded) {
        pred_prefix.states = Matrix(good_rows, n);
        std::copy(pred.states.data.begin(),
                  pred.states.data.begin() + static_cast<std::ptrdiff_t>(good_rows * n),
                  pred_prefix.states.data.begin());
        pred_prefix.dt_sample = pred.dt_sample;
        pred_prefix.system_tag = pred.system_tag;
        pred_used = &pred_prefix;
    }

    rep.truth_rows = truth.states.rows;
    rep.pred_rows = pred_used->states.rows;
    rep.kl_physical = kl_physical(truth, *pred_used, options.bins_1d, options.transient,
                                  options.smoothing_eps);
    rep.kl_physical_per_dim = kl_physical_per_dim(truth, *pred_used, options.bins_1d,
                                                  options.transient, options.smoothing_eps);
    rep.kl_pca =
        kl_pca(truth, *pred_used, options.bins_pca, options.transient, options.smoothing_eps);

    if (is_power_of_two(n)) {
        std::size_t tr = 0, pr = 0;
        const auto tv = post_transient(truth, options.transient, tr);
        const auto pv = post_transient(*pred_used, options.transient, pr);
        Trajectory tt, pp;
        tt.states = Matrix(tr, n);
        std::copy(tv.begin(), tv.end(), tt.states.data.begin());
        pp.states = Matrix(pr, n);
        std::copy(pv.begin(), pv.end(), pp.states.data.begin());
        rep.log_spectral_distance =
            log_spectral_distance(power_spectrum(tt), power_spectrum(pp), options.lsd_p);
    }

    if (energy != nullptr) {
        check_dim(energy->dim(), n, "evaluate");
        std::size_t tr = 0;
        const auto tv = post_transient(truth, options.transient, tr);
        std::size_t inside = 0;
        for (std::size_t r = 0; r < tr; ++r)
            if (energy->eval(tv.subspan(r * n, n)) <= energy->hyper().c) ++inside;
        rep.containment_fraction = static_cast<double>(inside) / static_cast<double>(tr);
    }
    return rep;
}

std::string report_to_json(const MetricsReport& rep) {
    nlohmann::json j;
    j["kl_physical"] = rep.kl_physical;
    j["kl_physical_per_dim"] = rep.kl_physical_per_dim;
    j["kl_pca"] = rep.kl_pca;
    if (rep.log_spectral_distance)
        j["log_spectral_distance"] = *rep.log_spectral_distance;
    else
        j["log_spectral_distance"] = nullptr;
    j["bounded"] = rep.bounded;
    j["truth_rows"] = rep.truth_rows;
    j["pred_rows"] = rep.pred_rows;
    if (rep.containment_fraction)
        j["containment_fraction"] = *rep.containment_fraction;
    else
        j["containment_fraction"] = nullptr;
    j["options"] = {{"bins_1d", rep.options.bins_1d},
                    {"bins_pca", rep.options.bins_pca},
                    {"transient", rep.options.transient},
                    {"smoothing_eps", rep.options.smoothing_eps},
                    {"lsd_p", rep.options.lsd_p}};
    return j.dump(2);
}

}  // namespace eco
