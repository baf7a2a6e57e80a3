#include "gs4d/synth.hpp"

#include "gs4d/error.hpp"
#include "gs4d/render.hpp"
#include "gs4d/sh.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace gs4d {

namespace {

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

} // namespace

void Motion::apply(double t, Vec3& position, Vec4& rotation) const {
    switch (kind) {
    case Kind::Static: return;
    case Kind::Translate:
        position += axis * (amplitude * std::sin(2.0 * M_PI * frequency * t));
        return;
    case Kind::Rotate: {
        const double angle = amplitude * t;
        const Eigen::AngleAxisd aa(angle, axis.normalized());
        position = pivot + aa.toRotationMatrix() * (position - pivot);
        Vec4 dq;
        dq << std::cos(0.5 * angle), std::sin(0.5 * angle) * axis.normalized();
        rotation = quat_multiply(dq, rotation);
        return;
    }
    }
}

GaussianSet GroundTruth::at(double t) const {
    GaussianSet out = canonical;
    for (std::size_t i = 0; i < out.size(); ++i) {
        Vec3 p = canonical.position(i);
        Vec4 r = canonical.rotation(i);
        motions.at(motion_of.at(i)).apply(t, p, r);
        for (int k = 0; k < 3; ++k) out.positions[3 * i + k] = p[k];
        for (int k = 0; k < 4; ++k) out.rotations[4 * i + k] = r[k];
    }
    return out;
}

std::vector<ClusterSpec> SynthSpec::default_clusters() {
    ClusterSpec still;
    still.center = Vec3(-0.55, -0.35, 0.0);
    still.color = Vec3(0.85, 0.25, 0.2);

    ClusterSpec slide;
    slide.center = Vec3(0.5, -0.3, 0.1);
    slide.color = Vec3(0.2, 0.7, 0.3);
    slide.motion.kind = Motion::Kind::Translate;
    slide.motion.axis = Vec3::UnitZ();
    slide.motion.amplitude = 0.3;
    slide.motion.frequency = 1.0;

    ClusterSpec spin;
    spin.center = Vec3(0.0, 0.55, -0.1);
    spin.color = Vec3(0.2, 0.35, 0.9);
    spin.motion.kind = Motion::Kind::Rotate;
    spin.motion.axis = Vec3::UnitZ();
    spin.motion.pivot = spin.center;
    spin.motion.amplitude = 0.5 * M_PI;
    return {still, slide, spin};
}

Camera orbit_camera(const SynthSpec& spec, double index, double offset) {
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    const double azimuth = (index + offset) * golden;
    const double frac = std::fmod((index + offset) * 0.6180339887498949, 1.0);
    const double elevation = spec.elevation * (0.4 + 1.2 * frac);
    const Vec3 eye = spec.orbit_radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                              std::cos(elevation) * std::sin(azimuth),
                                              std::sin(elevation));
    const double f = 0.5 * spec.width / std::tan(0.5 * spec.fov_x);
    return Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), f, f, spec.width, spec.height);
}

SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.width < 1 || spec.height < 1) throw InvalidInput("synth: image size must be >= 1");
    if (spec.train_frames < 2) throw InvalidInput("synth: need at least two training frames");
    if (!(spec.fov_x > 0.0 && spec.fov_x < M_PI)) throw InvalidInput("synth: fov_x must lie in (0, pi)");
    Rng rng(seed);
    SynthScene scene;
    GroundTruth& gt = scene.truth;
    gt.canonical.sh_degree = 0;
    const double c0 = sh_basis(Vec3::UnitZ(), 0)[0];
    for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
        const ClusterSpec& cl = spec.clusters[c];
        gt.motions.push_back(cl.motion);
        for (std::size_t j = 0; j < spec.gaussians_per_cluster; ++j) {
            const std::size_t i = gt.canonical.size();
            gt.canonical.resize(i + 1);
            for (int k = 0; k < 3; ++k) {
                gt.canonical.positions[3 * i + k] = cl.center[k] + cl.radius * rng.uniform(-1.0, 1.0);
                gt.canonical.scales[3 * i + k] = std::log(cl.scale * rng.uniform(0.6, 1.4));
            }
            Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
            q /= q.norm();
            for (int k = 0; k < 4; ++k) gt.canonical.rotations[4 * i + k] = q[k];
            gt.canonical.opacities[i] = logit(rng.uniform(0.75, 0.95));
            for (int k = 0; k < 3; ++k) {
                const double col = std::clamp(cl.color[k] + rng.uniform(-0.15, 0.15), 0.0, 1.0);
                gt.canonical.sh_dc[3 * i + k] = (col - 0.5) / c0;
            }
            gt.motion_of.push_back(c);
        }
    }

    auto make_frame = [&](const Camera& cam, double t) {
        Frame f;
        f.camera = cam;
        f.time = t;
        f.image = render_reference(cam, gt.at(t), spec.background).rgb;
        return f;
    };
    for (std::size_t i = 0; i < spec.train_frames; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(spec.train_frames - 1);
        scene.train.push_back(make_frame(orbit_camera(spec, static_cast<double>(i)), t));
    }
    for (std::size_t i = 0; i < spec.test_frames; ++i) {
        const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(spec.test_frames);
        const double index = (static_cast<double>(i) + 0.5) * static_cast<double>(spec.train_frames) /
                             static_cast<double>(spec.test_frames);
        scene.test.push_back(make_frame(orbit_camera(spec, index, 0.5), t));
    }

    const GaussianSet first = gt.at(0.0);
    scene.points.positions = first.positions;
    for (double& p : scene.points.positions) p += spec.point_noise * rng.normal();
    scene.points.colors.resize(first.sh_dc.size());
    for (std::size_t k = 0; k < first.sh_dc.size(); ++k) {
        scene.points.colors[k] = std::clamp(first.sh_dc[k] * c0 + 0.5, 0.0, 1.0);
    }
    return scene;
}

} // namespace gs4d
