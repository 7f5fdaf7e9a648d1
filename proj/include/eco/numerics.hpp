#pragma once

#include <span>
#include <vector>

#include "eco/linalg.hpp"

namespace eco {

/// Complex spectrum held as separate real/imaginary arrays. Length must be a
/// power of two with N >= 2.
struct ComplexSpectrum {
    std::vector<double> re;
    std::vector<double> im;

    std::size_t size() const { return re.size(); }
};

bool is_power_of_two(std::size_t n);

/// Unnormalized forward DFT of a real signal, radix-2 decimation in time.
ComplexSpectrum fft_forward(std::span<const double> signal);

/// Inverse transform with 1/N normalization; returns the real part.
/// fft_inverse(fft_forward(x)) == x to ~1e-15 relative.
std::vector<double> fft_inverse(const ComplexSpectrum& spectrum);

/// In-place complex FFT used by the spectral integrator. inverse=true applies
/// the conjugate transform and the 1/N factor.
void fft_complex(std::span<double> re, std::span<double> im, bool inverse);

/// Cholesky factor L (lower triangular, positive diagonal) with L*L^T = Q.
/// Throws std::invalid_argument if Q is not symmetric, std::runtime_error if
/// a non-positive pivot shows Q is not positive definite.
Matrix cholesky(const Matrix& q);

struct PcaResult {
    Matrix components;               // count x n, orthonormal rows
    Matrix projected;                // T x count
    std::vector<double> eigenvalues; // decreasing
    Vec mean;                        // column means used for centering
};

/// Top principal components of mean-centered data via power iteration with
/// deflation. The sign of each component is fixed so its largest-magnitude
/// entry is positive.
PcaResult top_principal_components(const Matrix& data, int count);

}  // namespace eco
