#include "gs4d/bench.hpp"

#include "gs4d/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace gs4d {

GaussianSet resize_gaussians(const GaussianSet& set, std::size_t count, Rng& rng) {
    set.validate();
    GaussianSet out;
    out.sh_degree = set.sh_degree;
    if (count == 0) return out;
    if (set.empty()) throw InvalidInput("resize_gaussians: cannot grow an empty set");
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = i % set.size();
        out.push_back_from(set, src);
        if (i < set.size()) continue;
        const double s = std::exp(set.scale(src).maxCoeff());
        for (int k = 0; k < 3; ++k) out.positions[3 * i + k] += 0.5 * s * rng.normal();
    }
    return out;
}

std::vector<BenchResult> bench_fps(const Model& model, const std::vector<Camera>& cameras,
                                   const std::vector<double>& times, const std::vector<std::size_t>& counts,
                                   int repeat, const Vec3& background, std::uint64_t seed) {
    if (cameras.empty() || cameras.size() != times.size()) {
        throw InvalidInput("bench_fps: need one time per camera and at least one camera");
    }
    if (repeat < 1) throw InvalidInput("bench_fps: repeat must be >= 1");
    std::vector<BenchResult> results;
    Rng rng(seed);
    for (std::size_t count : counts) {
        Model m = model;
        m.gaussians = resize_gaussians(model.gaussians, count, rng);
        std::vector<double> seconds;
        for (int r = 0; r < repeat; ++r) {
            const auto start = std::chrono::steady_clock::now();
            for (std::size_t c = 0; c < cameras.size(); ++c) {
                RenderedImage img = render_model(m, cameras[c], times[c], background);
                (void)img;
            }
            const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
            seconds.push_back(d.count());
        }
        std::sort(seconds.begin(), seconds.end());
        BenchResult res;
        res.gaussians = count;
        const std::size_t mid = seconds.size() / 2;
        res.median_seconds = seconds.size() % 2 ? seconds[mid] : 0.5 * (seconds[mid - 1] + seconds[mid]);
        res.renders_per_second = static_cast<double>(cameras.size()) / std::max(res.median_seconds, 1e-12);
        results.push_back(res);
    }
    return results;
}

} // namespace gs4d
