#pragma once

#include "gs4d/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace gs4d {

struct Linear {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;   // out

    bool operator==(const Linear& o) const {
        return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
               weight == o.weight && bias.size() == o.bias.size() && bias == o.bias;
    }
};

/// Forward intermediates of Mlp::forward for the reverse pass.
struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs; // input of every layer, one column per sample
    std::vector<Eigen::MatrixXd> pre;    // pre-activation output of every layer
};

/// Fully connected network with ReLU between layers and a linear output.
/// Samples are columns; every column is computed independently, so a
/// sample's output does not depend on its batch position.
struct Mlp {
    std::vector<Linear> layers;

    /// widths = {in, hidden..., out}. Weights and biases are drawn uniformly
    /// from +-1/sqrt(fan_in); `zero_last` zeroes the output layer.
    static Mlp create(const std::vector<int>& widths, Rng& rng, bool zero_last = false);

    int input_width() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    int output_width() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpCache* cache = nullptr) const;

    /// Accumulates parameter gradients into `grads` (same shapes as *this)
    /// and returns dL/dx.
    Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& d_out, Mlp& grads) const;

    /// A network of the same shape filled with zeros.
    Mlp zeros_like() const;

    /// Throws ShapeError if consecutive layers do not chain.
    void validate() const;

    /// Views over every weight and bias, in layer order.
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;

    std::size_t parameter_count() const;

    bool operator==(const Mlp&) const = default;
};

/// Hash of the ReLU activation pattern recorded in a cache.
std::uint64_t relu_signature(const MlpCache& cache, std::uint64_t seed = 0);

} // namespace gs4d
