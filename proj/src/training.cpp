#include "eco/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "eco/rng.hpp"

namespace eco {

Vec TrainState::predict_raw(std::span<const double> w) const {
    const Vec xn = norm.normalize(w);
    const Vec o = mlp_forward(emulator, xn);
    return norm.denormalize(o);
}

Vec TrainState::predict(std::span<const double> w) const {
    Vec what = predict_raw(w);
    if (!projection_enabled) return what;
    return dissipative_project(energy, w, what, /*cache=*/false).w_star;
}

TrainState init_train_state(const PairDataset& data, std::vector<std::size_t> layer_sizes,
                            Activation activation, QMode qmode, EnergyHyper hyper,
                            std::uint64_t seed, bool projection_enabled) {
    if (data.size() == 0) throw std::invalid_argument("init_train_state: empty dataset");
    const std::size_t n = data.inputs.cols;
    if (layer_sizes.empty() || layer_sizes.front() != n || layer_sizes.back() != n)
        throw std::invalid_argument("init_train_state: layer sizes must start and end at n");

    // the initial ellipsoid must contain every training state, targets included
    Matrix all(data.inputs.rows + data.targets.rows, n);
    std::copy(data.inputs.data.begin(), data.inputs.data.end(), all.data.begin());
    std::copy(data.targets.data.begin(), data.targets.data.end(),
              all.data.begin() + static_cast<std::ptrdiff_t>(data.inputs.data.size()));

    TrainState state{.emulator = init_params(std::move(layer_sizes), seed, activation),
                     .norm = Normalization::from_data(data.inputs),
                     .energy = QuadraticEnergy::from_data(all, qmode, hyper),
                     .projection_enabled = projection_enabled};
    const std::size_t count = total_param_count(state);
    state.adam.m.assign(count, 0.0);
    state.adam.v.assign(count, 0.0);
    return state;
}

namespace {

struct ChunkResult {
    MlpGrad mgrad;
    EnergyGrad egrad;
    double sq_err_sum = 0.0;
    double max_ratio = 0.0;
    std::exception_ptr error;
};

// forward + backward over rows [row0, row1); gradients are raw sums of
// d(sum_i ||r_i||^2)/dparam over the chunk
void run_chunk(const TrainState& state, const TrainConfig& config, const Matrix& inputs,
               const Matrix& targets, std::size_t row0, std::size_t row1, ChunkResult& out) {
    try {
        const std::size_t n = inputs.cols;
        const std::size_t rows = row1 - row0;
        out.mgrad = MlpGrad::zeros_like(state.emulator);
        out.egrad = EnergyGrad(n, state.energy.theta_size());

        Matrix chunk(rows, n);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(inputs.row(row0 + r).begin(), inputs.row(row0 + r).end(),
                      chunk.row(r).begin());

        MlpCache cache;
        const Matrix xn = state.norm.normalize_rows(chunk);
        const Matrix o = mlp_forward(state.emulator, xn, &cache);
        const Matrix what = state.norm.denormalize_rows(o);

        Matrix d_o(rows, n);
        Vec resid(n);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto target = targets.row(row0 + r);
            if (state.projection_enabled) {
                const ProjectionRecord rec =
                    dissipative_project(state.energy, chunk.row(r), what.row(r), /*cache=*/true,
                                        config.stop_grad_gamma);
                const double v_star = state.energy.eval(rec.w_star);
                const double cert = lemma1_certificate(state.energy.hyper().k, rec.b);
                if (v_star > cert * (1.0 + 1e-10))
                    throw std::logic_error("training: Lemma 1 certificate violated in batch");
                out.max_ratio = std::max(out.max_ratio, v_star / rec.b);

                for (std::size_t j = 0; j < n; ++j) resid[j] = rec.w_star[j] - target[j];
                out.sq_err_sum += dot(resid, resid);
                Vec upstream(n);
                for (std::size_t j = 0; j < n; ++j) upstream[j] = 2.0 * resid[j];
                const ProjectionGrad pg = projection_backward(rec, upstream);
                // teacher forcing: pg.w_t is the data gradient, dropped
                axpy(1.0, pg.energy.w_c, out.egrad.w_c);
                axpy(1.0, pg.energy.theta, out.egrad.theta);
                for (std::size_t j = 0; j < n; ++j) d_o(r, j) = pg.w_hat[j] * state.norm.std[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) resid[j] = what(r, j) - target[j];
                out.sq_err_sum += dot(resid, resid);
                for (std::size_t j = 0; j < n; ++j) d_o(r, j) = 2.0 * resid[j] * state.norm.std[j];
            }
        }
        mlp_backward(state.emulator, cache, d_o, out.mgrad);
    } catch (...) {
        out.error = std::current_exception();
    }
}

void add_into(MlpGrad& dst, const MlpGrad& src) {
    for (std::size_t l = 0; l < dst.weights.size(); ++l) {
        for (std::size_t i = 0; i < dst.weights[l].data.size(); ++i)
            dst.weights[l].data[i] += src.weights[l].data[i];
        for (std::size_t i = 0; i < dst.biases[l].size(); ++i)
            dst.biases[l][i] += src.biases[l][i];
    }
}

struct BlockRef {
    std::span<double> param;
    std::span<double> grad;
    const char* name;
    bool energy = false;
};

std::vector<BlockRef> param_blocks(TrainState& state, MlpGrad& mg, EnergyGrad& eg) {
    std::vector<BlockRef> blocks;
    for (std::size_t l = 0; l < state.emulator.weights.size(); ++l) {
        blocks.push_back({state.emulator.weights[l].data, mg.weights[l].data, "emulator.weights"});
        blocks.push_back({state.emulator.biases[l], mg.biases[l], "emulator.biases"});
    }
    blocks.push_back({state.energy.center(), eg.w_c, "energy.w_c", true});
    blocks.push_back({state.energy.theta(), eg.theta, "energy.theta", true});
    return blocks;
}

}  // namespace

LossResult loss_forward(const TrainState& state, const Matrix& inputs, const Matrix& targets,
                        double lambda_vol) {
    if (inputs.rows == 0) throw std::invalid_argument("loss_forward: empty batch");
    if (!inputs.same_shape(targets)) throw std::invalid_argument("loss_forward: shape mismatch");
    check_dim(inputs.cols, state.emulator.dim_in(), "loss_forward");

    const std::size_t n = inputs.cols;
    LossResult res;
    res.predictions = Matrix(inputs.rows, n);

    const Matrix xn = state.norm.normalize_rows(inputs);
    const Matrix o = mlp_forward(state.emulator, xn);
    const Matrix what = state.norm.denormalize_rows(o);

    double sq = 0.0;
    Vec resid(n);
    for (std::size_t r = 0; r < inputs.rows; ++r) {
        std::span<const double> pred;
        if (state.projection_enabled) {
            res.records.push_back(
                dissipative_project(state.energy, inputs.row(r), what.row(r), /*cache=*/true));
            pred = res.records.back().w_star;
        } else {
            pred = what.row(r);
        }
        std::copy(pred.begin(), pred.end(), res.predictions.row(r).begin());
        for (std::size_t j = 0; j < n; ++j) resid[j] = pred[j] - targets(r, j);
        sq += dot(resid, resid);
    }
    res.mse = sq / static_cast<double>(inputs.rows);
    res.vol = state.projection_enabled ? state.energy.volume_penalty() : 0.0;
    res.total = res.mse + (state.projection_enabled ? lambda_vol * res.vol : 0.0);
    return res;
}

GradientBundle compute_gradients(const TrainState& state, const Matrix& inputs,
                                 const Matrix& targets, const TrainConfig& config) {
    if (inputs.rows == 0) throw std::invalid_argument("compute_gradients: empty batch");
    if (!inputs.same_shape(targets))
        throw std::invalid_argument("compute_gradients: shape mismatch");

    const std::size_t rows = inputs.rows;
    const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, rows));

    std::vector<ChunkResult> results(workers);
    if (workers == 1) {
        run_chunk(state, config, inputs, targets, 0, rows, results[0]);
    } else {
        std::vector<std::thread> pool;
        const std::size_t per = (rows + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t r0 = w * per;
            const std::size_t r1 = std::min(rows, r0 + per);
            if (r0 >= r1) continue;
            pool.emplace_back(run_chunk, std::cref(state), std::cref(config), std::cref(inputs),
                              std::cref(targets), r0, r1, std::ref(results[w]));
        }
        for (auto& t : pool) t.join();
    }

    GradientBundle bundle;
    bundle.emulator = MlpGrad::zeros_like(state.emulator);
    bundle.energy = EnergyGrad(state.energy.dim(), state.energy.theta_size());
    double sq = 0.0;
    for (auto& res : results) {  // fixed chunk order keeps the sum deterministic
        if (res.error) std::rethrow_exception(res.error);
        if (res.mgrad.weights.empty()) continue;
        add_into(bundle.emulator, res.mgrad);
        axpy(1.0, res.egrad.w_c, bundle.energy.w_c);
        axpy(1.0, res.egrad.theta, bundle.energy.theta);
        sq += res.sq_err_sum;
        bundle.stats.max_v_ratio = std::max(bundle.stats.max_v_ratio, res.max_ratio);
    }

    const double inv_b = 1.0 / static_cast<double>(rows);
    bundle.emulator.scale(inv_b);
    for (double& x : bundle.energy.w_c) x *= inv_b;
    for (double& x : bundle.energy.theta) x *= inv_b;
    bundle.stats.mse = sq * inv_b;

    if (state.projection_enabled) {
        state.energy.accumulate_volume_grad(config.lambda_vol, bundle.energy);
        bundle.stats.vol = state.energy.volume_penalty();
    }
    return bundle;
}

StepStats train_step(TrainState& state, const Matrix& inputs, const Matrix& targets,
                     const TrainConfig& config) {
    GradientBundle bundle = compute_gradients(state, inputs, targets, config);

    auto blocks = param_blocks(state, bundle.emulator, bundle.energy);
    double norm_sq = 0.0;
    for (const auto& blk : blocks) {
        if (!all_finite(blk.grad))
            throw std::runtime_error(std::string("train_step: non-finite gradient in ") +
                                     blk.name);
        norm_sq += dot(blk.grad, blk.grad);
    }
    if (config.grad_clip_norm > 0.0) {
        const double gnorm = std::sqrt(norm_sq);
        if (gnorm > config.grad_clip_norm) {
            const double f = config.grad_clip_norm / gnorm;
            for (auto& blk : blocks)
                for (double& g : blk.grad) g *= f;
        }
    }

    state.adam.step += 1;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.adam.step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.adam.step));
    std::size_t cursor = 0;
    for (auto& blk : blocks) {
        const double lr =
            config.learning_rate * (blk.energy ? config.energy_lr_scale : 1.0);
        for (std::size_t i = 0; i < blk.param.size(); ++i, ++cursor) {
            double& m = state.adam.m[cursor];
            double& v = state.adam.v[cursor];
            const double g = blk.grad[i];
            m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g;
            v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g * g;
            blk.param[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + config.adam_eps);
        }
    }
    return bundle.stats;
}

TrainState train(const TrainConfig& config, const PairDataset& data, TrainState state,
                 const EpochCallback& on_epoch) {
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (!(config.learning_rate > 0.0) || config.batch_size == 0)
        throw std::invalid_argument("train: need learning_rate > 0 and batch_size >= 1");

    state.projection_enabled = config.projection_enabled;
    state.lambda_vol = config.lambda_vol;
    const std::size_t npairs = data.size();
    const std::size_t n = data.inputs.cols;

    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::vector<std::size_t> perm(npairs);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng prng(derive_seed(config.seed, state.epoch));
        for (std::size_t i = npairs - 1; i > 0; --i) std::swap(perm[i], perm[prng.index(i + 1)]);

        double sq_sum = 0.0;
        double max_ratio = 0.0;
        for (std::size_t start = 0; start < npairs; start += config.batch_size) {
            const std::size_t bsz = std::min(config.batch_size, npairs - start);
            Matrix bx(bsz, n), by(bsz, n);
            for (std::size_t r = 0; r < bsz; ++r) {
                const std::size_t src = perm[start + r];
                std::copy(data.inputs.row(src).begin(), data.inputs.row(src).end(),
                          bx.row(r).begin());
                std::copy(data.targets.row(src).begin(), data.targets.row(src).end(),
                          by.row(r).begin());
            }
            const StepStats stats = train_step(state, bx, by, config);
            sq_sum += stats.mse * static_cast<double>(bsz);
            max_ratio = std::max(max_ratio, stats.max_v_ratio);
        }

        state.epoch += 1;
        const double epoch_mse = sq_sum / static_cast<double>(npairs);
        const double vol = config.projection_enabled ? state.energy.volume_penalty() : 0.0;
        state.mse_history.push_back(epoch_mse);
        state.vol_history.push_back(vol);
        if (!std::isfinite(epoch_mse))
            throw std::runtime_error("train: non-finite loss at epoch " +
                                     std::to_string(state.epoch));
        if (config.verbose)
            std::printf("epoch %5zu  mse %.6e  vol %.6e  max V/b %.6f\n", state.epoch, epoch_mse,
                        vol, max_ratio);
        if (on_epoch) on_epoch(state, state.epoch);
    }
    return state;
}

std::size_t total_param_count(const TrainState& state) {
    return state.emulator.param_count() + state.energy.dim() + state.energy.theta_size();
}

Vec flatten_params(const TrainState& state) {
    Vec flat;
    flat.reserve(total_param_count(state));
    for (std::size_t l = 0; l < state.emulator.weights.size(); ++l) {
        flat.insert(flat.end(), state.emulator.weights[l].data.begin(),
                    state.emulator.weights[l].data.end());
        flat.insert(flat.end(), state.emulator.biases[l].begin(),
                    state.emulator.biases[l].end());
    }
    flat.insert(flat.end(), state.energy.center().begin(), state.energy.center().end());
    flat.insert(flat.end(), state.energy.theta().begin(), state.energy.theta().end());
    return flat;
}

void unflatten_params(TrainState& state, std::span<const double> flat) {
    check_dim(flat.size(), total_param_count(state), "unflatten_params");
    std::size_t cur = 0;
    auto take = [&](std::span<double> dst) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(cur),
                  flat.begin() + static_cast<std::ptrdiff_t>(cur + dst.size()), dst.begin());
        cur += dst.size();
    };
    for (std::size_t l = 0; l < state.emulator.weights.size(); ++l) {
        take(state.emulator.weights[l].data);
        take(state.emulator.biases[l]);
    }
    take(state.energy.center());
    take(state.energy.theta());
}

}  // namespace eco
