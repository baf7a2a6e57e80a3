#pragma once

#include "gs4d/camera.hpp"
#include "gs4d/trainer.hpp"

#include <cstdint>
#include <vector>

namespace gs4d {

struct BenchResult {
    std::size_t gaussians = 0;
    double median_seconds = 0.0;    // per full pass over the camera path
    double renders_per_second = 0.0;
};

/// `count` Gaussians from `set`: its first `count` rows when it has enough,
/// otherwise copies with centres jittered by a fraction of their scale.
GaussianSet resize_gaussians(const GaussianSet& set, std::size_t count, Rng& rng);

/// Times deform + render over every (camera, time) pair for each requested
/// Gaussian count; reports the median over `repeat` passes.
std::vector<BenchResult> bench_fps(const Model& model, const std::vector<Camera>& cameras,
                                   const std::vector<double>& times, const std::vector<std::size_t>& counts,
                                   int repeat, const Vec3& background, std::uint64_t seed = 0);

} // namespace gs4d
