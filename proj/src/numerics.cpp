#include "eco/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eco {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
}

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

void fft_complex(std::span<double> re, std::span<double> im, bool inverse) {
    const std::size_t n = re.size();
    if (n != im.size()) throw std::invalid_argument("fft: re/im length mismatch");
    if (!is_power_of_two(n)) throw std::invalid_argument("fft: length must be a power of two >= 2");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }

    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const double ang = sign * kTwoPi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                // direct trig per butterfly keeps twiddle error at machine level
                const double wr = std::cos(ang * static_cast<double>(j));
                const double wi = std::sin(ang * static_cast<double>(j));
                const std::size_t a = i + j;
                const std::size_t b = a + half;
                const double tr = re[b] * wr - im[b] * wi;
                const double ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
    }

    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            re[i] *= inv;
            im[i] *= inv;
        }
    }
}

ComplexSpectrum fft_forward(std::span<const double> signal) {
    if (!is_power_of_two(signal.size()))
        throw std::invalid_argument("fft_forward: length must be a power of two >= 2");
    ComplexSpectrum s;
    s.re.assign(signal.begin(), signal.end());
    s.im.assign(signal.size(), 0.0);
    fft_complex(s.re, s.im, false);
    return s;
}

std::vector<double> fft_inverse(const ComplexSpectrum& spectrum) {
    if (spectrum.re.size() != spectrum.im.size())
        throw std::invalid_argument("fft_inverse: re/im length mismatch");
    std::vector<double> re(spectrum.re);
    std::vector<double> im(spectrum.im);
    fft_complex(re, im, true);
    return re;
}

Matrix cholesky(const Matrix& q) {
    const std::size_t n = q.rows;
    if (q.cols != n) throw std::invalid_argument("cholesky: matrix must be square");
    double scale = 0.0;
    for (double x : q.data) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(q(i, j) - q(j, i)) > 1e-8 * std::max(1.0, scale))
                throw std::invalid_argument("cholesky: matrix is not symmetric");

    Matrix l(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = q(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) throw std::runtime_error("cholesky: matrix is not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = q(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

namespace {

// Deterministic start vector for the power iteration; any fixed full vector
// works because a zero overlap with the leading eigenvector has measure zero
// for the fixed pseudo-random draw.
Vec power_iteration_start(std::size_t n) {
    Vec v(n);
    std::uint64_t state = 0x2545f4914f6cdd1dULL;
    for (std::size_t i = 0; i < n; ++i) {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        v[i] = 0.5 + static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    const double nm = norm2(v);
    for (double& x : v) x /= nm;
    return v;
}

void mat_vec(const Matrix& m, std::span<const double> x, Vec& out) {
    out.assign(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = dot(m.row(i), x);
}

}  // namespace

PcaResult top_principal_components(const Matrix& data, int count) {
    const std::size_t t = data.rows;
    const std::size_t n = data.cols;
    if (t < 2) throw std::invalid_argument("top_principal_components: need at least 2 samples");
    if (count < 1 || static_cast<std::size_t>(count) > std::min(t, n))
        throw std::invalid_argument("top_principal_components: count out of range");

    Vec mean(n, 0.0);
    for (std::size_t i = 0; i < t; ++i) axpy(1.0, data.row(i), mean);
    for (double& m : mean) m /= static_cast<double>(t);

    Matrix centered(t, n);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < n; ++j) centered(i, j) = data(i, j) - mean[j];

    Matrix cov(n, n, 0.0);
    matmul_atb_accum(centered, centered, cov);
    const double inv_t1 = 1.0 / static_cast<double>(t - 1);
    for (double& x : cov.data) x *= inv_t1;

    double total_var = 0.0;
    for (std::size_t j = 0; j < n; ++j) total_var += cov(j, j);
    if (!(total_var > 0.0))
        throw std::invalid_argument("top_principal_components: degenerate data (zero variance)");

    PcaResult res;
    res.components = Matrix(static_cast<std::size_t>(count), n);
    res.eigenvalues.resize(static_cast<std::size_t>(count));

    Matrix work = cov;
    for (int comp = 0; comp < count; ++comp) {
        Vec v = power_iteration_start(n);
        auto orthogonalize = [&](Vec& x) {
            for (int p = 0; p < comp; ++p) {
                const double proj = dot(res.components.row(static_cast<std::size_t>(p)), x);
                axpy(-proj, res.components.row(static_cast<std::size_t>(p)), x);
            }
        };
        orthogonalize(v);
        double vn = norm2(v);
        if (vn > 0) for (double& x : v) x /= vn;

        Vec next;
        for (int it = 0; it < 10000; ++it) {
            mat_vec(work, v, next);
            orthogonalize(next);
            const double nn = norm2(next);
            if (nn <= 1e-250 * std::max(1.0, total_var)) break;  // exactly deflated to zero
            for (double& x : next) x /= nn;
            const double overlap = std::abs(dot(next, v));
            v = next;
            if (1.0 - overlap < 1e-10) break;
        }

        // Rayleigh quotient for the reported eigenvalue
        mat_vec(work, v, next);
        double lambda = dot(v, next);
        if (lambda < 0.0 && lambda > -1e-12 * total_var) lambda = 0.0;

        // sign convention: largest-magnitude entry positive
        std::size_t arg = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0.0)
            for (double& x : v) x = -x;

        for (std::size_t j = 0; j < n; ++j) res.components(static_cast<std::size_t>(comp), j) = v[j];
        res.eigenvalues[static_cast<std::size_t>(comp)] = lambda;

        // deflate
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) work(i, j) -= lambda * v[i] * v[j];
    }

    matmul_abt(centered, res.components, res.projected);
    res.mean = std::move(mean);
    return res;
}

}  // namespace eco
