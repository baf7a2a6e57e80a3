#pragma once

#include "gs4d/camera.hpp"
#include "gs4d/gaussian.hpp"
#include "gs4d/image.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gs4d {

/// Added to the diagonal of every projected covariance (pixels^2).
constexpr double kLowPassFilter = 0.3;
constexpr double kMaxAlpha = 0.99;
/// Compositing stops once transmittance falls below this value.
constexpr double kMinTransmittance = 1e-4;
/// Fragments only contribute inside their 3-sigma ellipse: 1/2 d^T S^-1 d <= 4.5.
constexpr double kMaxPower = 4.5;
constexpr int kTileSize = 16;

/// A Gaussian projected to the image plane.
struct Fragment {
    std::size_t gaussian_index = 0;
    Vec2 mean2d = Vec2::Zero();
    std::array<double, 3> cov2d{}; // (xx, xy, yy), low-pass included
    std::array<double, 3> conic{}; // inverse of cov2d, (xx, xy, yy)
    double depth = 0.0;
    Vec3 color = Vec3::Zero(); // clamped to [0, 1]
    double opacity = 0.0;
    double radius = 0.0; // 3-sigma footprint radius in pixels
};

/// Intermediates of project_gaussian needed by the reverse pass.
struct ProjectionCache {
    Vec3 cam_point = Vec3::Zero();
    Eigen::Matrix<double, 2, 3> jw = Eigen::Matrix<double, 2, 3>::Zero(); // J W
    Mat3 cov3 = Mat3::Zero();
    Vec3 view_dir = Vec3::Zero();
    double view_dist = 0.0;
    std::array<bool, 3> color_clamped{};
};

/// EWA projection of Gaussian `index` (Sigma' = J W Sigma W^T J^T). Returns
/// nullopt when the centre lies outside [near, far], the projected
/// covariance is singular, or the footprint misses the image.
std::optional<Fragment> project_gaussian(const GaussianSet& set, std::size_t index,
                                         const ActivatedGaussian& g, const Camera& camera,
                                         ProjectionCache* cache = nullptr);

/// Alpha of a fragment at pixel p: opacity * exp(-power) clamped to
/// kMaxAlpha, or 0 outside the 3-sigma ellipse.
double fragment_alpha(const Fragment& f, const Vec2& p, double* power_out = nullptr,
                      bool* clamped_out = nullptr);

struct PixelResult {
    Vec3 rgb = Vec3::Zero();
    double transmittance = 1.0;
    std::size_t contributors = 0;
};

/// C = sum_i c_i a_i T_i + T_final * background over depth-sorted fragments.
/// Stops after the fragment that brings T below kMinTransmittance.
PixelResult composite_pixel(std::span<const Fragment> sorted, const Vec2& p,
                            const Vec3& background);

struct RenderedImage {
    Image rgb;
    std::vector<double> transmittance; // per pixel, row-major
    /// Hash over every discrete decision taken while rendering (culling,
    /// depth order, colour clamps, per-pixel cutoffs, alpha clamps and early
    /// stops). Only filled when RenderOptions::signature is set.
    std::uint64_t signature = 0;
    std::size_t visible = 0;
};

struct RenderOptions {
    bool signature = false;
};

/// Projects every Gaussian, sorts globally by (depth, index) and composites
/// each pixel over the fragments binned to its 16x16 tile, in parallel over
/// tiles. Equal bit-for-bit to render_reference.
RenderedImage render(const Camera& camera, const GaussianSet& set, const Vec3& background,
                     const RenderOptions& options = {});

/// Naive reference: every pixel composites the full sorted fragment list.
RenderedImage render_reference(const Camera& camera, const GaussianSet& set,
                               const Vec3& background);

/// Projected, depth-sorted fragments as used by both renderers.
std::vector<Fragment> project_and_sort(const Camera& camera, const GaussianSet& set);

struct RenderGrads {
    GaussianGrads params;
    std::vector<double> mean2d;  // [N][2], dL/d(pixel-space centre)
    std::vector<bool> visible;   // projected and not culled
};

/// Gradients of L = sum(d_image * render(...)) w.r.t. every raw parameter.
RenderGrads render_backward(const Camera& camera, const GaussianSet& set, const Vec3& background,
                            const Image& d_image);

} // namespace gs4d
