#pragma once

#include "gs4d/gaussian.hpp"
#include "gs4d/hexplane.hpp"
#include "gs4d/mlp.hpp"
#include "gs4d/rng.hpp"

#include <array>
#include <span>
#include <vector>

namespace gs4d {

enum class Head : int { Position = 0, Rotation = 1, Scale = 2, Color = 3, Opacity = 4 };
constexpr int kHeadCount = 5;

struct DeformConfig {
    int width = 64; // hidden width of every head
    std::array<bool, kHeadCount> enabled{true, true, true, false, false};

    bool operator==(const DeformConfig&) const = default;
};

/// Multi-head decoder. Each enabled head is Linear(fd -> width), ReLU,
/// Linear(width -> out) with the last layer zeroed at creation; disabled
/// heads have no layers.
struct DeformNet {
    DeformConfig config;
    int sh_degree = 0;
    std::array<Mlp, kHeadCount> heads;

    static DeformNet create(const DeformConfig& config, int feature_width, int sh_degree, Rng& rng);

    bool enabled(Head h) const { return config.enabled[static_cast<int>(h)]; }
    Mlp& head(Head h) { return heads[static_cast<int>(h)]; }
    const Mlp& head(Head h) const { return heads[static_cast<int>(h)]; }

    /// Output width of a head: 3, 4, 3, (deg+1)^2 * 3, 1.
    static int output_width(Head h, int sh_degree);

    DeformNet zeros_like() const;
    void add(const DeformNet& other);
    void validate(int feature_width) const;

    bool operator==(const DeformNet&) const = default;
};

/// Forward intermediates of deform().
struct DeformCache {
    double t = 0.0;
    EncodeCache encode;
    std::array<MlpCache, kHeadCount> heads;
    /// Gaussians whose deformed quaternion had norm <= 1e-8; these keep the
    /// canonical rotation and get no rotation-head gradient.
    std::vector<bool> quat_fallback;
    std::size_t quat_violations = 0;
};

/// Norm below which a deformed quaternion is treated as degenerate.
constexpr double kMinQuaternionNorm = 1e-8;

/// G' = G + D(encode(X, t)): deltas are added to the raw parameters, queried
/// at the canonical centres. Count and order are preserved.
GaussianSet deform(const GaussianSet& set, const HexPlaneField& field, const DeformNet& net,
                   double t, DeformCache* cache = nullptr);

/// Reverse pass of deform. `d_deformed` is dL/dG' in raw-parameter layout.
/// Gradients are added into d_set, d_field and d_net.
void deform_backward(const GaussianSet& set, const HexPlaneField& field, const DeformNet& net,
                     const DeformCache& cache, const GaussianGrads& d_deformed,
                     GaussianGrads& d_set, FieldGrads& d_field, DeformNet& d_net);

/// Concatenation of sets that share an SH degree. Throws ShapeError otherwise.
GaussianSet compose(std::span<const GaussianSet> sets);

} // namespace gs4d
