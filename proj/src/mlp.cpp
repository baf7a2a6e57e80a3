#include "gs4d/mlp.hpp"

#include "gs4d/error.hpp"

#include <cmath>

namespace gs4d {

Mlp Mlp::create(const std::vector<int>& widths, Rng& rng, bool zero_last) {
    if (widths.size() < 2) throw ShapeError("Mlp::create: need at least input and output widths");
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l], out = widths[l + 1];
        if (in < 1 || out < 1) throw ShapeError("Mlp::create: layer widths must be positive");
        Linear layer;
        layer.weight.resize(out, in);
        layer.bias.resize(out);
        const bool zero = zero_last && l + 2 == widths.size();
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                layer.weight(r, c) = zero ? 0.0 : rng.uniform(-bound, bound);
            }
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            layer.bias[r] = zero ? 0.0 : rng.uniform(-bound, bound);
        }
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, MlpCache* cache) const {
    if (x.rows() != input_width()) throw ShapeError("Mlp::forward: input width mismatch");
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Linear& layer = layers[l];
        Eigen::MatrixXd z(layer.weight.rows(), h.cols());
        for (Eigen::Index b = 0; b < h.cols(); ++b) {
            z.col(b).noalias() = layer.weight * h.col(b);
            z.col(b) += layer.bias;
        }
        if (cache) {
            cache->inputs.push_back(h);
            cache->pre.push_back(z);
        }
        if (l + 1 < layers.size()) {
            h = z.cwiseMax(0.0);
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Eigen::MatrixXd Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& d_out, Mlp& grads) const {
    if (cache.inputs.size() != layers.size()) throw ShapeError("Mlp::backward: stale cache");
    Eigen::MatrixXd d = d_out;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Linear& layer = layers[l];
        if (l + 1 < layers.size()) {
            // ReLU: pass gradient only where the pre-activation was positive.
            d = (cache.pre[l].array() > 0.0).select(d, 0.0);
        }
        grads.layers[l].weight.noalias() += d * cache.inputs[l].transpose();
        grads.layers[l].bias += d.rowwise().sum();
        Eigen::MatrixXd dx(layer.weight.cols(), d.cols());
        for (Eigen::Index b = 0; b < d.cols(); ++b) {
            dx.col(b).noalias() = layer.weight.transpose() * d.col(b);
        }
        d = std::move(dx);
    }
    return d;
}

Mlp Mlp::zeros_like() const {
    Mlp z;
    for (const Linear& l : layers) {
        z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                            Eigen::VectorXd::Zero(l.bias.size())});
    }
    return z;
}

void Mlp::validate() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].bias.size() != layers[l].weight.rows()) {
            throw ShapeError("Mlp: bias length does not match layer output width");
        }
        if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows()) {
            throw ShapeError("Mlp: consecutive layer shapes are incompatible");
        }
    }
}

std::vector<std::span<double>> Mlp::parameters() {
    std::vector<std::span<double>> out;
    for (Linear& l : layers) {
        out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
}

std::vector<std::span<const double>> Mlp::parameters() const {
    std::vector<std::span<const double>> out;
    for (const Linear& l : layers) {
        out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const Linear& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

std::uint64_t relu_signature(const MlpCache& cache, std::uint64_t seed) {
    std::uint64_t h = seed ^ 0xcbf29ce484222325ULL;
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l) {
        const Eigen::MatrixXd& z = cache.pre[l];
        for (Eigen::Index k = 0; k < z.size(); ++k) {
            h ^= z.data()[k] > 0.0 ? 1u : 0u;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

} // namespace gs4d
