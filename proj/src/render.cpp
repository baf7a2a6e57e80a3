#include "gs4d/render.hpp"

#include "gs4d/error.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/sh.hpp"

#include <algorithm>
#include <cmath>

namespace gs4d {

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    v += 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    v ^= v >> 30;
    v *= 0xbf58476d1ce4e5b9ULL;
    v ^= v >> 27;
    v *= 0x94d049bb133111ebULL;
    v ^= v >> 31;
    return h ^ v;
}

struct NoTrace {
    void contribute(std::size_t, bool) {}
    void stop(std::size_t) {}
};

struct HashTrace {
    std::uint64_t h = 0x12345;
    void contribute(std::size_t index, bool clamped) { h = mix(h, index * 2 + (clamped ? 1 : 0)); }
    void stop(std::size_t position) { h = mix(h, ~static_cast<std::uint64_t>(position)); }
};

template <typename Trace>
PixelResult composite_impl(std::span<const Fragment> sorted, const Vec2& p, const Vec3& background,
                           Trace& trace) {
    PixelResult out;
    double t = 1.0;
    Vec3 c = Vec3::Zero();
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const Fragment& f = sorted[i];
        bool clamped = false;
        const double alpha = fragment_alpha(f, p, nullptr, &clamped);
        if (alpha <= 0.0) continue;
        trace.contribute(f.gaussian_index, clamped);
        c += f.color * (alpha * t);
        t *= 1.0 - alpha;
        ++out.contributors;
        if (t < kMinTransmittance) {
            trace.stop(out.contributors);
            break;
        }
    }
    out.rgb = c + background * t;
    out.transmittance = t;
    return out;
}

struct TileGrid {
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists; // indices into the sorted fragments

    std::size_t count() const { return lists.size(); }
};

void footprint_pixels(const Fragment& f, const Camera& cam, int& x0, int& x1, int& y0, int& y1) {
    x0 = std::max(0, static_cast<int>(std::ceil(f.mean2d.x() - f.radius)));
    x1 = std::min(cam.width - 1, static_cast<int>(std::floor(f.mean2d.x() + f.radius)));
    y0 = std::max(0, static_cast<int>(std::ceil(f.mean2d.y() - f.radius)));
    y1 = std::min(cam.height - 1, static_cast<int>(std::floor(f.mean2d.y() + f.radius)));
}

TileGrid bin_fragments(const Camera& cam, const std::vector<Fragment>& frags) {
    TileGrid grid;
    grid.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    grid.lists.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);
    for (std::size_t k = 0; k < frags.size(); ++k) {
        int x0, x1, y0, y1;
        footprint_pixels(frags[k], cam, x0, x1, y0, y1);
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty) {
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) {
                grid.lists[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(
                    static_cast<std::uint32_t>(k));
            }
        }
    }
    return grid;
}

std::uint64_t fragment_list_signature(const std::vector<Fragment>& frags,
                                      const std::vector<std::array<bool, 3>>& clamps) {
    std::uint64_t h = 0xabcdef;
    for (std::size_t k = 0; k < frags.size(); ++k) {
        h = mix(h, frags[k].gaussian_index);
        const auto& cl = clamps[k];
        h = mix(h, (cl[0] ? 1u : 0u) | (cl[1] ? 2u : 0u) | (cl[2] ? 4u : 0u));
    }
    return h;
}

std::vector<Fragment> project_all(const Camera& camera, const GaussianSet& set,
                                  std::vector<std::array<bool, 3>>* clamps) {
    camera.validate();
    set.validate();
    const std::size_t n = set.size();
    std::vector<std::optional<Fragment>> slots(n);
    std::vector<std::array<bool, 3>> slot_clamps(n);
    parallel_for(
        n,
        [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const ActivatedGaussian g = activate(set, i);
                ProjectionCache cache;
                slots[i] = project_gaussian(set, i, g, camera, &cache);
                slot_clamps[i] = cache.color_clamped;
            }
        },
        64);
    std::vector<Fragment> frags;
    frags.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (slots[i]) frags.push_back(*slots[i]);
    }
    std::sort(frags.begin(), frags.end(), [](const Fragment& a, const Fragment& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_index < b.gaussian_index;
    });
    if (clamps) {
        clamps->clear();
        for (const Fragment& f : frags) clamps->push_back(slot_clamps[f.gaussian_index]);
    }
    return frags;
}

void check_render_inputs(const Camera& camera) {
    if (camera.width < 1 || camera.height < 1) {
        throw InvalidInput("render: image size must be at least 1x1");
    }
}

} // namespace

std::optional<Fragment> project_gaussian(const GaussianSet& set, std::size_t index,
                                         const ActivatedGaussian& g, const Camera& camera,
                                         ProjectionCache* cache) {
    const Vec3 tc = camera.rotation * g.position + camera.translation;
    if (!(tc.z() >= camera.near) || !(tc.z() <= camera.far)) return std::nullopt;

    const double iz = 1.0 / tc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.fx * iz, 0.0, -camera.fx * tc.x() * iz * iz, 0.0, camera.fy * iz,
        -camera.fy * tc.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> jw = j * camera.rotation;
    const Mat3 cov3 = build_covariance(g.scale, g.rotation).matrix();
    const Mat2 c2 = jw * cov3 * jw.transpose();

    Fragment f;
    f.gaussian_index = index;
    f.cov2d = {c2(0, 0) + kLowPassFilter, c2(0, 1), c2(1, 1) + kLowPassFilter};
    const double det = f.cov2d[0] * f.cov2d[2] - f.cov2d[1] * f.cov2d[1];
    if (!(det > 1e-18) || !std::isfinite(det)) return std::nullopt;
    f.conic = {f.cov2d[2] / det, -f.cov2d[1] / det, f.cov2d[0] / det};
    f.mean2d = Vec2(camera.fx * tc.x() * iz + camera.cx, camera.fy * tc.y() * iz + camera.cy);
    f.depth = tc.z();

    const double mid = 0.5 * (f.cov2d[0] + f.cov2d[2]);
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    // Slightly inflated so the tile bins always cover the exact cutoff ellipse.
    f.radius = std::ceil(3.0 * std::sqrt(lambda_max) * (1.0 + 1e-9) + 1e-9);
    if (f.mean2d.x() + f.radius < 0.0 || f.mean2d.x() - f.radius > camera.width - 1 ||
        f.mean2d.y() + f.radius < 0.0 || f.mean2d.y() - f.radius > camera.height - 1) {
        return std::nullopt;
    }

    const Vec3 v = g.position - camera.center();
    const double dist = v.norm();
    const Vec3 dir = dist > 0.0 ? Vec3(v / dist) : Vec3(0.0, 0.0, 1.0);
    const Vec3 raw = eval_sh(set, index, dir);
    std::array<bool, 3> clamped{};
    for (int ch = 0; ch < 3; ++ch) {
        clamped[ch] = raw[ch] < 0.0 || raw[ch] > 1.0;
        f.color[ch] = std::clamp(raw[ch], 0.0, 1.0);
    }
    f.opacity = g.opacity;

    if (cache) {
        cache->cam_point = tc;
        cache->jw = jw;
        cache->cov3 = cov3;
        cache->view_dir = dir;
        cache->view_dist = dist;
        cache->color_clamped = clamped;
    }
    return f;
}

double fragment_alpha(const Fragment& f, const Vec2& p, double* power_out, bool* clamped_out) {
    const double dx = p.x() - f.mean2d.x();
    const double dy = p.y() - f.mean2d.y();
    const double power = 0.5 * (f.conic[0] * dx * dx + f.conic[2] * dy * dy) + f.conic[1] * dx * dy;
    if (power_out) *power_out = power;
    if (clamped_out) *clamped_out = false;
    if (!(power >= 0.0) || power > kMaxPower) return 0.0;
    const double alpha = f.opacity * std::exp(-power);
    if (alpha > kMaxAlpha) {
        if (clamped_out) *clamped_out = true;
        return kMaxAlpha;
    }
    return alpha;
}

PixelResult composite_pixel(std::span<const Fragment> sorted, const Vec2& p,
                            const Vec3& background) {
    NoTrace trace;
    return composite_impl(sorted, p, background, trace);
}

std::vector<Fragment> project_and_sort(const Camera& camera, const GaussianSet& set) {
    return project_all(camera, set, nullptr);
}

RenderedImage render(const Camera& camera, const GaussianSet& set, const Vec3& background,
                     const RenderOptions& options) {
    check_render_inputs(camera);
    std::vector<std::array<bool, 3>> clamps;
    const std::vector<Fragment> frags = project_all(camera, set, &clamps);
    const TileGrid grid = bin_fragments(camera, frags);

    RenderedImage out;
    out.rgb = Image(camera.width, camera.height);
    out.transmittance.assign(out.rgb.pixel_count(), 1.0);
    out.visible = frags.size();
    std::vector<std::uint64_t> pixel_hash(options.signature ? out.rgb.pixel_count() : 0);

    parallel_for(grid.count(), [&](std::size_t b, std::size_t e) {
        std::vector<Fragment> local;
        for (std::size_t tile = b; tile < e; ++tile) {
            const auto& list = grid.lists[tile];
            local.clear();
            for (std::uint32_t k : list) local.push_back(frags[k]);
            const int tx = static_cast<int>(tile % grid.tiles_x);
            const int ty = static_cast<int>(tile / grid.tiles_x);
            const int x_end = std::min(camera.width, (tx + 1) * kTileSize);
            const int y_end = std::min(camera.height, (ty + 1) * kTileSize);
            for (int y = ty * kTileSize; y < y_end; ++y) {
                for (int x = tx * kTileSize; x < x_end; ++x) {
                    const Vec2 p(x, y);
                    PixelResult r;
                    if (options.signature) {
                        HashTrace trace;
                        r = composite_impl(local, p, background, trace);
                        pixel_hash[static_cast<std::size_t>(y) * camera.width + x] = trace.h;
                    } else {
                        NoTrace trace;
                        r = composite_impl(local, p, background, trace);
                    }
                    const std::size_t o = out.rgb.offset(x, y);
                    for (int c = 0; c < 3; ++c) out.rgb.data[o + c] = r.rgb[c];
                    out.transmittance[static_cast<std::size_t>(y) * camera.width + x] =
                        r.transmittance;
                }
            }
        }
    });

    if (options.signature) {
        std::uint64_t h = fragment_list_signature(frags, clamps);
        for (std::uint64_t ph : pixel_hash) h = mix(h, ph);
        out.signature = h;
    }
    return out;
}

RenderedImage render_reference(const Camera& camera, const GaussianSet& set,
                               const Vec3& background) {
    check_render_inputs(camera);
    const std::vector<Fragment> frags = project_all(camera, set, nullptr);
    RenderedImage out;
    out.rgb = Image(camera.width, camera.height);
    out.transmittance.assign(out.rgb.pixel_count(), 1.0);
    out.visible = frags.size();
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const PixelResult r = composite_pixel(frags, Vec2(x, y), background);
            for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = r.rgb[c];
            out.transmittance[static_cast<std::size_t>(y) * camera.width + x] = r.transmittance;
        }
    }
    return out;
}

namespace {

/// Image-space gradients of one fragment: mean (2), conic (3), colour (3), opacity.
struct FragmentGrad {
    double mean[2] = {0.0, 0.0};
    double conic[3] = {0.0, 0.0, 0.0};
    double color[3] = {0.0, 0.0, 0.0};
    double opacity = 0.0;

    void add(const FragmentGrad& o) {
        mean[0] += o.mean[0];
        mean[1] += o.mean[1];
        for (int k = 0; k < 3; ++k) {
            conic[k] += o.conic[k];
            color[k] += o.color[k];
        }
        opacity += o.opacity;
    }
};

struct Contribution {
    std::uint32_t local = 0;
    double alpha = 0.0;
    double t = 0.0; // transmittance in front of the fragment
    double dx = 0.0;
    double dy = 0.0;
    double falloff = 0.0; // exp(-power)
    bool clamped = false;
};

void pixel_backward(std::span<const Fragment> list, const Vec2& p, const Vec3& background,
                    const Vec3& d_pixel, std::vector<Contribution>& scratch,
                    std::span<FragmentGrad> grads) {
    scratch.clear();
    double t = 1.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const Fragment& f = list[i];
        bool clamped = false;
        double power = 0.0;
        const double alpha = fragment_alpha(f, p, &power, &clamped);
        if (alpha <= 0.0) continue;
        scratch.push_back({static_cast<std::uint32_t>(i), alpha, t, p.x() - f.mean2d.x(),
                           p.y() - f.mean2d.y(), std::exp(-power), clamped});
        t *= 1.0 - alpha;
        if (t < kMinTransmittance) break;
    }
    Vec3 behind = background;
    for (std::size_t k = scratch.size(); k-- > 0;) {
        const Contribution& c = scratch[k];
        const Fragment& f = list[c.local];
        FragmentGrad& g = grads[c.local];
        const double w = c.alpha * c.t;
        for (int ch = 0; ch < 3; ++ch) g.color[ch] += w * d_pixel[ch];
        const double d_alpha = c.t * (f.color - behind).dot(d_pixel);
        behind = c.alpha * f.color + (1.0 - c.alpha) * behind;
        if (c.clamped) continue;
        g.opacity += c.falloff * d_alpha;
        const double d_power = -c.alpha * d_alpha;
        g.conic[0] += 0.5 * c.dx * c.dx * d_power;
        g.conic[1] += c.dx * c.dy * d_power;
        g.conic[2] += 0.5 * c.dy * c.dy * d_power;
        g.mean[0] -= (f.conic[0] * c.dx + f.conic[1] * c.dy) * d_power;
        g.mean[1] -= (f.conic[1] * c.dx + f.conic[2] * c.dy) * d_power;
    }
}

void projection_backward(const GaussianSet& set, std::size_t i, const ActivatedGaussian& g,
                         const Camera& cam, const Fragment& f, const ProjectionCache& cache,
                         const FragmentGrad& fg, GaussianGrads& out) {
    // conic -> cov2d: dM = -Q dQ Q with symmetric dQ.
    Mat2 q;
    q << f.conic[0], f.conic[1], f.conic[1], f.conic[2];
    Mat2 dq;
    dq << fg.conic[0], 0.5 * fg.conic[1], 0.5 * fg.conic[1], fg.conic[2];
    const Mat2 d_cov2 = -q * dq * q;

    const Eigen::Matrix<double, 2, 3>& jw = cache.jw;
    const Mat3 d_cov3 = jw.transpose() * d_cov2 * jw;
    const Eigen::Matrix<double, 2, 3> d_jw = 2.0 * d_cov2 * jw * cache.cov3;
    const Eigen::Matrix<double, 2, 3> d_j = d_jw * cam.rotation.transpose();

    const Vec3& tc = cache.cam_point;
    const double iz = 1.0 / tc.z();
    const double iz2 = iz * iz;
    const double iz3 = iz2 * iz;
    Vec3 d_tc;
    d_tc.x() = fg.mean[0] * cam.fx * iz - d_j(0, 2) * cam.fx * iz2;
    d_tc.y() = fg.mean[1] * cam.fy * iz - d_j(1, 2) * cam.fy * iz2;
    d_tc.z() = -fg.mean[0] * cam.fx * tc.x() * iz2 - fg.mean[1] * cam.fy * tc.y() * iz2 -
               d_j(0, 0) * cam.fx * iz2 - d_j(1, 1) * cam.fy * iz2 +
               d_j(0, 2) * 2.0 * cam.fx * tc.x() * iz3 + d_j(1, 2) * 2.0 * cam.fy * tc.y() * iz3;
    Vec3 d_pos = cam.rotation.transpose() * d_tc;

    Vec3 d_rgb;
    for (int ch = 0; ch < 3; ++ch) d_rgb[ch] = cache.color_clamped[ch] ? 0.0 : fg.color[ch];
    const Vec3 d_dir = eval_sh_backward(set, i, cache.view_dir, d_rgb, out);
    if (cache.view_dist > 0.0) {
        const Vec3& dir = cache.view_dir;
        d_pos += (d_dir - dir * dir.dot(d_dir)) / cache.view_dist;
    }

    Vec3 d_scale;
    Vec4 d_quat;
    build_covariance_backward(g.scale, g.rotation, d_cov3, d_scale, d_quat);
    const Vec4 d_raw_quat = normalize_quaternion_backward(set.rotation(i), d_quat);

    for (int k = 0; k < 3; ++k) {
        out.positions[3 * i + k] += d_pos[k];
        out.scales[3 * i + k] += d_scale[k] * g.scale[k];
    }
    for (int k = 0; k < 4; ++k) out.rotations[4 * i + k] += d_raw_quat[k];
    out.opacities[i] += fg.opacity * g.opacity * (1.0 - g.opacity);
}

} // namespace

RenderGrads render_backward(const Camera& camera, const GaussianSet& set, const Vec3& background,
                            const Image& d_image) {
    check_render_inputs(camera);
    if (d_image.width != camera.width || d_image.height != camera.height) {
        throw ShapeError("render_backward: upstream gradient size does not match camera");
    }
    const std::vector<Fragment> frags = project_all(camera, set, nullptr);
    const TileGrid grid = bin_fragments(camera, frags);

    std::vector<std::vector<FragmentGrad>> tile_grads(grid.count());
    parallel_for(grid.count(), [&](std::size_t b, std::size_t e) {
        std::vector<Fragment> local;
        std::vector<Contribution> scratch;
        for (std::size_t tile = b; tile < e; ++tile) {
            const auto& list = grid.lists[tile];
            if (list.empty()) continue;
            local.clear();
            for (std::uint32_t k : list) local.push_back(frags[k]);
            auto& grads = tile_grads[tile];
            grads.assign(list.size(), FragmentGrad{});
            const int tx = static_cast<int>(tile % grid.tiles_x);
            const int ty = static_cast<int>(tile / grid.tiles_x);
            const int x_end = std::min(camera.width, (tx + 1) * kTileSize);
            const int y_end = std::min(camera.height, (ty + 1) * kTileSize);
            for (int y = ty * kTileSize; y < y_end; ++y) {
                for (int x = tx * kTileSize; x < x_end; ++x) {
                    const Vec3 d_pixel = d_image.pixel(x, y);
                    if (d_pixel.isZero(0.0)) continue;
                    pixel_backward(local, Vec2(x, y), background, d_pixel, scratch, grads);
                }
            }
        }
    });

    // Merge in fixed tile order so the result is independent of the thread count.
    std::vector<FragmentGrad> frag_grads(frags.size());
    for (std::size_t tile = 0; tile < grid.count(); ++tile) {
        const auto& list = grid.lists[tile];
        const auto& grads = tile_grads[tile];
        for (std::size_t k = 0; k < grads.size(); ++k) frag_grads[list[k]].add(grads[k]);
    }

    RenderGrads out;
    out.params = GaussianGrads::zeros_like(set);
    out.mean2d.assign(2 * set.size(), 0.0);
    out.visible.assign(set.size(), false);
    parallel_for(
        frags.size(),
        [&](std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k) {
                const Fragment& f = frags[k];
                const std::size_t i = f.gaussian_index;
                const ActivatedGaussian g = activate(set, i);
                ProjectionCache cache;
                project_gaussian(set, i, g, camera, &cache);
                projection_backward(set, i, g, camera, f, cache, frag_grads[k], out.params);
                out.mean2d[2 * i] = frag_grads[k].mean[0];
                out.mean2d[2 * i + 1] = frag_grads[k].mean[1];
            }
        },
        16);
    for (const Fragment& f : frags) out.visible[f.gaussian_index] = true;
    return out;
}

} // namespace gs4d
