#pragma once

#include "gs4d/math.hpp"
#include "gs4d/mlp.hpp"
#include "gs4d/rng.hpp"

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace gs4d {

/// Axis pairs of the six planes, in order: xy, xz, yz, xt, yt, zt
/// (axis 3 is time).
constexpr std::array<std::array<int, 2>, 6> kPlaneAxes = {
    {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

/// One 2D feature plane. Vertex (a, b) stores `channels` features at
/// data[(a * cols + b) * channels + c]; a runs along axes[0].
struct PlaneGrid {
    std::array<int, 2> axes{0, 1};
    int scale = 1; // multi-resolution upsampling factor of this level
    int channels = 1;
    int rows = 2;
    int cols = 2;
    std::vector<double> data;

    std::size_t index(int a, int b) const {
        return (static_cast<std::size_t>(a) * cols + b) * channels;
    }

    bool operator==(const PlaneGrid&) const = default;
};

/// Bilinear read of the plane at normalised coordinates (u, v), each clamped
/// to [0, 1]; u maps onto rows, v onto columns.
Eigen::VectorXd interp_plane(const PlaneGrid& plane, double u, double v);

/// Axis-aligned box mapping world positions into [0,1]^3.
struct Bounds {
    Vec3 min = Vec3::Constant(-1.0);
    Vec3 max = Vec3::Constant(1.0);

    /// Box of the points inflated by `margin` of its extent on every side.
    static Bounds around(std::span<const double> positions, double margin = 0.1);

    bool operator==(const Bounds& o) const { return min == o.min && max == o.max; }
};

struct FieldConfig {
    std::array<int, 4> resolution{64, 64, 64, 64}; // base N along x, y, z, t
    std::vector<int> multires{1, 2};
    int channels = 32;      // h
    int hidden = 64;        // hidden width of the fusion MLP
    int feature_width = 64; // width of f_d
    bool use_planes = true; // false: the fusion MLP reads (x, y, z, t) directly

    bool operator==(const FieldConfig&) const = default;
};

/// Six multi-resolution planes per level plus the fusion MLP.
struct HexPlaneField {
    FieldConfig config;
    Bounds bounds;
    std::vector<std::array<PlaneGrid, 6>> levels;
    Mlp fusion;

    /// Planes uniform in [0.9, 1.1], fusion MLP with fan-in initialisation.
    static HexPlaneField create(const FieldConfig& config, const Bounds& bounds, Rng& rng);

    /// Width of the fused plane feature f_h.
    int fused_width() const;
    int feature_width() const { return fusion.output_width(); }

    /// Throws ShapeError / InvalidInput on inconsistent layout or bounds.
    void validate() const;

    bool operator==(const HexPlaneField&) const = default;
};

/// Normalised (x, y, z, t) query and which components were clamped.
struct GridQuery {
    std::array<double, 4> coord{};
    std::array<bool, 4> clamped{};
};

GridQuery make_query(const Bounds& bounds, const Vec3& position, double t);

/// f_h: per level the Hadamard product of the six plane features,
/// concatenated over levels. In MLP-only mode it is the normalised query.
Eigen::VectorXd fuse_planes(const HexPlaneField& field, const GridQuery& q);

/// f_d = fusion(f_h) for a single query. Optionally returns f_h.
Eigen::VectorXd encode(const HexPlaneField& field, const Vec3& position, double t,
                       Eigen::VectorXd* fused = nullptr);

/// Batched forward intermediates for encode_backward.
struct EncodeCache {
    std::vector<GridQuery> queries;
    Eigen::MatrixXd fused;    // f_h, one column per query
    MlpCache mlp;
    Eigen::MatrixXd features; // f_d, one column per query
};

/// Encodes positions [N][3] at a shared time t.
EncodeCache encode_batch(const HexPlaneField& field, std::span<const double> positions, double t);

/// Gradients of every field parameter, same layout as the field.
struct FieldGrads {
    std::vector<std::array<std::vector<double>, 6>> planes;
    Mlp fusion;

    static FieldGrads zeros_like(const HexPlaneField& field);
    void add(const FieldGrads& other);
};

/// Reverse pass of encode_batch. `d_features` is dL/df_d (feature_width x N).
/// Adds into `grads`; `d_positions` ([N][3]) and `d_times` ([N]) are
/// accumulated when non-null.
void encode_backward(const HexPlaneField& field, const EncodeCache& cache,
                     const Eigen::MatrixXd& d_features, FieldGrads& grads,
                     std::vector<double>* d_positions = nullptr,
                     std::vector<double>* d_times = nullptr);

/// Mean of squared differences between horizontally and vertically adjacent
/// entries, pooled over every plane, level and channel.
double tv_loss(const HexPlaneField& field);

/// Adds weight * dtv/dplanes into grads.
void tv_loss_backward(const HexPlaneField& field, double weight, FieldGrads& grads);

/// Hash of the interpolation cells and clamps used by a batch.
std::uint64_t encode_signature(const HexPlaneField& field, const EncodeCache& cache);

} // namespace gs4d
