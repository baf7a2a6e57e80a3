#pragma once

// Random scenes and scratch directories shared by the test binaries.

#include "gs4d/camera.hpp"
#include "gs4d/gaussian.hpp"
#include "gs4d/rng.hpp"

#include <filesystem>
#include <string>

#include <unistd.h>

namespace scenes {

/// Camera on a sphere of radius 4 looking at the origin.
inline gs4d::Camera random_camera(gs4d::Rng& rng, int w, int h) {
    const double az = rng.uniform(0.0, 6.283185307179586);
    const double el = rng.uniform(-0.5, 0.5);
    const gs4d::Vec3 eye(4 * std::cos(el) * std::cos(az), 4 * std::cos(el) * std::sin(az), 4 * std::sin(el));
    const double f = 0.5 * w / std::tan(0.5 * 0.7);
    return gs4d::Camera::look_at(eye, gs4d::Vec3::Zero(), gs4d::Vec3::UnitZ(), f, f, w, h);
}

/// n Gaussians inside the unit cube with moderate scales and opacities.
inline gs4d::GaussianSet random_set(gs4d::Rng& rng, std::size_t n, int sh_degree,
                                    double scale_lo = 0.05, double scale_hi = 0.3) {
    gs4d::GaussianSet s;
    s.sh_degree = sh_degree;
    s.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            s.positions[3 * i + k] = rng.uniform(-0.8, 0.8);
            s.scales[3 * i + k] = std::log(rng.uniform(scale_lo, scale_hi));
            s.sh_dc[3 * i + k] = rng.uniform(-1.2, 1.2);
        }
        for (int k = 0; k < 4; ++k) s.rotations[4 * i + k] = rng.uniform(-1.0, 1.0);
        s.rotations[4 * i] += 1.5;
        s.opacities[i] = rng.uniform(-1.5, 2.5);
        for (std::size_t k = 0; k < s.rest_stride(); ++k) s.sh_rest[i * s.rest_stride() + k] = rng.uniform(-0.3, 0.3);
    }
    return s;
}

/// Unique directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("gs4d_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

} // namespace scenes

