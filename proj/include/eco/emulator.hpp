#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eco/linalg.hpp"

namespace eco {

enum class Activation { tanh, gelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Fully connected network; weights[l] is (out x in), identity on the output
/// layer and `activation` on all hidden layers.
struct MlpParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<Vec> biases;
    Activation activation = Activation::tanh;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t dim_in() const { return layer_sizes.front(); }
    std::size_t dim_out() const { return layer_sizes.back(); }
    std::size_t param_count() const;
};

/// Weights ~ N(0, 1/fan_in), biases zero; deterministic in seed.
MlpParams init_params(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                      Activation activation = Activation::tanh);

struct MlpCache {
    bool valid = false;
    std::vector<Matrix> acts;  // acts[0] = input batch, acts[l+1] = layer l output
    std::vector<Matrix> pre;   // hidden-layer pre-activations
};

struct MlpGrad {
    std::vector<Matrix> weights;
    std::vector<Vec> biases;

    static MlpGrad zeros_like(const MlpParams& p);
    void scale(double s);
};

/// Batched forward over row-vector states; pass cache to enable backward.
Matrix mlp_forward(const MlpParams& p, const Matrix& input, MlpCache* cache = nullptr);
Vec mlp_forward(const MlpParams& p, std::span<const double> w, MlpCache* cache = nullptr);

/// Accumulates parameter gradients into `grad` and returns the input-batch
/// gradient. `upstream` is d(loss)/d(output), one row per batch element.
Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& upstream,
                    MlpGrad& grad);

/// Per-dimension standardization; the MLP sees normalized states while the
/// energy always operates on physical ones.
struct Normalization {
    Vec mean;
    Vec std;  // floored at 1e-8

    static Normalization from_data(const Matrix& states);
    static Normalization identity(std::size_t n);

    Vec normalize(std::span<const double> w) const;
    Vec denormalize(std::span<const double> w) const;
    Matrix normalize_rows(const Matrix& m) const;
    Matrix denormalize_rows(const Matrix& m) const;
};

}  // namespace eco
