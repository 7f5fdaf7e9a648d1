#include "eco/emulator.hpp"

#include <cmath>
#include <stdexcept>

#include "eco/rng.hpp"

namespace eco {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "gelu"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "gelu") return Activation::gelu;
    throw std::invalid_argument("unknown activation: " + s);
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].rows * weights[l].cols + biases[l].size();
    return n;
}

MlpParams init_params(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                      Activation activation) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("init_params: need at least 2 layers");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw std::invalid_argument("init_params: zero layer size");

    MlpParams p;
    p.layer_sizes = std::move(layer_sizes);
    p.activation = activation;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const std::size_t in = p.layer_sizes[l];
        const std::size_t out = p.layer_sizes[l + 1];
        Matrix w(out, in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& x : w.data) x = scale * rng.normal();
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(out, 0.0);
    }
    return p;
}

MlpGrad MlpGrad::zeros_like(const MlpParams& p) {
    MlpGrad g;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        g.weights.emplace_back(p.weights[l].rows, p.weights[l].cols, 0.0);
        g.biases.emplace_back(p.biases[l].size(), 0.0);
    }
    return g;
}

void MlpGrad::scale(double s) {
    for (auto& w : weights)
        for (double& x : w.data) x *= s;
    for (auto& b : biases)
        for (double& x : b) x *= s;
}

namespace {

constexpr double gelu_c = 0.044715;
const double gelu_s = std::sqrt(2.0 / 3.14159265358979323846);

inline double gelu(double z) {
    return 0.5 * z * (1.0 + std::tanh(gelu_s * (z + gelu_c * z * z * z)));
}

inline double gelu_prime(double z) {
    const double t = std::tanh(gelu_s * (z + gelu_c * z * z * z));
    const double ds = gelu_s * (1.0 + 3.0 * gelu_c * z * z);
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * ds;
}

void apply_activation(Activation act, Matrix& m) {
    if (act == Activation::tanh)
        for (double& x : m.data) x = std::tanh(x);
    else
        for (double& x : m.data) x = gelu(x);
}

void check_cache(const MlpParams& p, const MlpCache& cache) {
    const std::size_t layers = p.num_layers();
    if (!cache.valid || cache.acts.size() != layers + 1 || cache.pre.size() + 1 != layers)
        throw std::logic_error("mlp_backward: cache missing or stale");
    for (std::size_t l = 0; l <= layers; ++l)
        if (cache.acts[l].cols != p.layer_sizes[l])
            throw std::logic_error("mlp_backward: cache does not match network shape");
}

}  // namespace

Matrix mlp_forward(const MlpParams& p, const Matrix& input, MlpCache* cache) {
    check_dim(input.cols, p.dim_in(), "mlp_forward");
    const std::size_t layers = p.num_layers();
    if (cache) {
        cache->valid = false;
        cache->acts.assign(1, input);
        cache->pre.clear();
    }

    Matrix cur = input;
    Matrix next;
    for (std::size_t l = 0; l < layers; ++l) {
        matmul_abt(cur, p.weights[l], next);  // (batch x out)
        for (std::size_t i = 0; i < next.rows; ++i) {
            double* row = next.data.data() + i * next.cols;
            for (std::size_t j = 0; j < next.cols; ++j) row[j] += p.biases[l][j];
        }
        if (l + 1 < layers) {
            if (cache) cache->pre.push_back(next);
            apply_activation(p.activation, next);
        }
        if (cache) cache->acts.push_back(next);
        cur = std::move(next);
        next = Matrix();
    }
    if (cache) cache->valid = true;
    return cur;
}

Vec mlp_forward(const MlpParams& p, std::span<const double> w, MlpCache* cache) {
    Matrix in(1, w.size());
    std::copy(w.begin(), w.end(), in.data.begin());
    Matrix out = mlp_forward(p, in, cache);
    return out.data;
}

Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& upstream,
                    MlpGrad& grad) {
    check_cache(p, cache);
    const std::size_t layers = p.num_layers();
    check_dim(upstream.cols, p.dim_out(), "mlp_backward");
    if (upstream.rows != cache.acts[0].rows)
        throw std::logic_error("mlp_backward: upstream batch size does not match cache");

    Matrix dz = upstream;  // output layer is identity
    Matrix da;
    for (std::size_t l = layers; l-- > 0;) {
        for (std::size_t j = 0; j < dz.cols; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < dz.rows; ++i) s += dz(i, j);
            grad.biases[l][j] += s;
        }
        matmul_atb_accum(dz, cache.acts[l], grad.weights[l]);  // dZ^T * A_l
        matmul_ab(dz, p.weights[l], da);                       // (batch x in)
        if (l == 0) break;
        // chain through the hidden activation of layer l-1
        const Matrix& z = cache.pre[l - 1];
        dz = std::move(da);
        da = Matrix();
        if (p.activation == Activation::tanh) {
            const Matrix& h = cache.acts[l];  // tanh(z) already computed
            for (std::size_t i = 0; i < dz.data.size(); ++i)
                dz.data[i] *= 1.0 - h.data[i] * h.data[i];
        } else {
            for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] *= gelu_prime(z.data[i]);
        }
    }
    return da;
}

Normalization Normalization::from_data(const Matrix& states) {
    const std::size_t t = states.rows;
    const std::size_t n = states.cols;
    if (t == 0 || n == 0) throw std::invalid_argument("Normalization::from_data: empty data");
    Normalization norm;
    norm.mean.assign(n, 0.0);
    norm.std.assign(n, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < n; ++j) norm.mean[j] += states(i, j);
    for (double& m : norm.mean) m /= static_cast<double>(t);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = states(i, j) - norm.mean[j];
            norm.std[j] += d * d;
        }
    for (double& s : norm.std) s = std::max(std::sqrt(s / static_cast<double>(t)), 1e-8);
    return norm;
}

Normalization Normalization::identity(std::size_t n) {
    Normalization norm;
    norm.mean.assign(n, 0.0);
    norm.std.assign(n, 1.0);
    return norm;
}

Vec Normalization::normalize(std::span<const double> w) const {
    check_dim(w.size(), mean.size(), "normalize");
    Vec out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = (w[i] - mean[i]) / std[i];
    return out;
}

Vec Normalization::denormalize(std::span<const double> w) const {
    check_dim(w.size(), mean.size(), "denormalize");
    Vec out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = mean[i] + std[i] * w[i];
    return out;
}

Matrix Normalization::normalize_rows(const Matrix& m) const {
    check_dim(m.cols, mean.size(), "normalize_rows");
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = (m(i, j) - mean[j]) / std[j];
    return out;
}

Matrix Normalization::denormalize_rows(const Matrix& m) const {
    check_dim(m.cols, mean.size(), "denormalize_rows");
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = mean[j] + std[j] * m(i, j);
    return out;
}

}  // namespace eco
