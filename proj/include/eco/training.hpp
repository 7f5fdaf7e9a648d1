#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "eco/dynamics.hpp"
#include "eco/emulator.hpp"
#include "eco/energy.hpp"
#include "eco/projection.hpp"

namespace eco {

struct TrainConfig {
    double lambda_vol = 1e-4;  // KS default: 1e-6
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool projection_enabled = true;
    double grad_clip_norm = 10.0;  // <= 0 disables clipping
    bool stop_grad_gamma = false;
    double energy_lr_scale = 1.0;  // separate rate for (w_c, theta); 1 = shared
    std::size_t threads = 1;
    bool verbose = false;
};

struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t step = 0;
};

/// Everything a checkpoint carries: the two learnable components plus
/// normalization, optimizer moments, and history.
struct TrainState {
    MlpParams emulator;
    Normalization norm;
    QuadraticEnergy energy;
    bool projection_enabled = true;
    double lambda_vol = 0.0;
    std::string system_tag;
    AdamState adam;
    std::size_t epoch = 0;
    std::vector<double> mse_history;
    std::vector<double> vol_history;

    /// One-step prediction w_hat = denorm(MLP(norm(w))) without projection.
    Vec predict_raw(std::span<const double> w) const;
    /// Full operator G*: emulator followed by the dissipative projection
    /// (when enabled).
    Vec predict(std::span<const double> w) const;
};

/// Emulator seeded from `seed`, normalization fit on the inputs, energy
/// centered on the data with its initial level set containing every state.
TrainState init_train_state(const PairDataset& data, std::vector<std::size_t> layer_sizes,
                            Activation activation, QMode qmode, EnergyHyper hyper,
                            std::uint64_t seed, bool projection_enabled = true);

struct LossResult {
    double total = 0.0;
    double mse = 0.0;
    double vol = 0.0;
    Matrix predictions;
    std::vector<ProjectionRecord> records;  // empty when projection disabled
};

/// total = mean_i ||w*_i - y_i||^2 + lambda_vol * det(Q)^(-1/2); the volume
/// term is omitted when projection is disabled.
LossResult loss_forward(const TrainState& state, const Matrix& inputs, const Matrix& targets,
                        double lambda_vol);

struct StepStats {
    double mse = 0.0;
    double vol = 0.0;
    double max_v_ratio = 0.0;  // max V(w*)/b over the batch
};

/// One Adam update over the concatenated parameter vector
/// (emulator weights/biases, w_c, theta).
StepStats train_step(TrainState& state, const Matrix& inputs, const Matrix& targets,
                     const TrainConfig& config);

using EpochCallback = std::function<void(const TrainState&, std::size_t /*epoch*/)>;

/// Shuffled minibatch epochs; the permutation for global epoch e is drawn
/// from derive_seed(config.seed, e) so a resumed run replays the identical
/// batch sequence.
TrainState train(const TrainConfig& config, const PairDataset& data, TrainState state,
                 const EpochCallback& on_epoch = {});

/// Flat parameter order: per layer (weights row-major, then bias), then w_c,
/// then theta. Adam moments use the same layout.
std::size_t total_param_count(const TrainState& state);
Vec flatten_params(const TrainState& state);
void unflatten_params(TrainState& state, std::span<const double> flat);

struct GradientBundle {
    MlpGrad emulator;
    EnergyGrad energy;
    StepStats stats;
};

/// Gradient of the total loss for one batch (teacher forcing: input states
/// are data, so their gradient is dropped).
GradientBundle compute_gradients(const TrainState& state, const Matrix& inputs,
                                 const Matrix& targets, const TrainConfig& config);

}  // namespace eco
