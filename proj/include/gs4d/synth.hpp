#pragma once

#include "gs4d/gaussian.hpp"
#include "gs4d/ply.hpp"
#include "gs4d/trainer.hpp"

#include <cstdint>
#include <vector>

namespace gs4d {

/// Motion program applied to one cluster of ground-truth Gaussians.
struct Motion {
    enum class Kind { Static, Translate, Rotate };
    Kind kind = Kind::Static;
    Vec3 axis = Vec3::UnitX();   // translation direction or rotation axis (unit)
    Vec3 pivot = Vec3::Zero();   // rotation centre
    double amplitude = 0.0;      // world units, or radians for Rotate
    double frequency = 1.0;      // cycles per unit time (Translate)

    /// Translate: offset = axis * amplitude * sin(2 pi frequency t).
    /// Rotate: angle = amplitude * t about `axis` through `pivot`.
    void apply(double t, Vec3& position, Vec4& rotation) const;
};

/// Canonical Gaussians with a motion per Gaussian.
struct GroundTruth {
    GaussianSet canonical;
    std::vector<Motion> motions;
    std::vector<std::size_t> motion_of; // per Gaussian index into motions

    GaussianSet at(double t) const;
};

struct ClusterSpec {
    Vec3 center = Vec3::Zero();
    double radius = 0.35;     // spread of the centres
    double scale = 0.08;      // mean Gaussian axis length
    Vec3 color = Vec3(0.8, 0.3, 0.2);
    Motion motion;
};

struct SynthSpec {
    std::size_t gaussians_per_cluster = 16;
    std::vector<ClusterSpec> clusters = default_clusters();
    std::size_t train_frames = 32;
    std::size_t test_frames = 8;
    int width = 64;
    int height = 64;
    double fov_x = 0.72;        // radians
    double orbit_radius = 4.0;
    double elevation = 0.35;    // radians, mean camera elevation
    Vec3 background = Vec3::Ones();
    double point_noise = 0.02;  // jitter of the exported point cloud

    /// A static, a sinusoidally translating and a rotating cluster.
    static std::vector<ClusterSpec> default_clusters();
};

struct SynthScene {
    GroundTruth truth;
    std::vector<Frame> train;
    std::vector<Frame> test;
    PointCloud points; // ground-truth centres at t = 0 plus jitter
};

/// Orbit camera number `i` of a sequence; `offset` shifts the golden-angle
/// azimuth sequence so held-out views fall between training views.
Camera orbit_camera(const SynthSpec& spec, double index, double offset = 0.0);

/// Builds the ground truth and renders every frame with render_reference.
/// Train times are i / (n - 1); test times are (i + 0.5) / n.
SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed);

} // namespace gs4d
