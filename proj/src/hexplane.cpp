#include "gs4d/hexplane.hpp"

#include "gs4d/error.hpp"
#include "gs4d/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gs4d {

namespace {

struct Cell {
    int lo = 0;
    double frac = 0.0;
};

Cell locate(double u, int n) {
    const double x = u * (n - 1);
    Cell c;
    c.lo = std::min(static_cast<int>(std::floor(x)), n - 2);
    c.frac = x - c.lo;
    return c;
}

struct Corners {
    std::size_t i00, i10, i01, i11; // (row, col) offsets
    double w00, w10, w01, w11;
    Cell a, b;
};

Corners corners(const PlaneGrid& p, double u, double v) {
    Corners k;
    k.a = locate(u, p.rows);
    k.b = locate(v, p.cols);
    k.i00 = p.index(k.a.lo, k.b.lo);
    k.i10 = p.index(k.a.lo + 1, k.b.lo);
    k.i01 = p.index(k.a.lo, k.b.lo + 1);
    k.i11 = p.index(k.a.lo + 1, k.b.lo + 1);
    const double fa = k.a.frac, fb = k.b.frac;
    k.w00 = (1.0 - fa) * (1.0 - fb);
    k.w10 = fa * (1.0 - fb);
    k.w01 = (1.0 - fa) * fb;
    k.w11 = fa * fb;
    return k;
}

void interp_into(const PlaneGrid& p, const Corners& k, double* out) {
    const double* d = p.data.data();
    for (int c = 0; c < p.channels; ++c) {
        out[c] = k.w00 * d[k.i00 + c] + k.w10 * d[k.i10 + c] + k.w01 * d[k.i01 + c] +
                 k.w11 * d[k.i11 + c];
    }
}

double clamp01(double x, bool& clamped) {
    clamped = x < 0.0 || x > 1.0;
    return std::clamp(x, 0.0, 1.0);
}

} // namespace

Eigen::VectorXd interp_plane(const PlaneGrid& plane, double u, double v) {
    bool cu = false, cv = false;
    const Corners k = corners(plane, clamp01(u, cu), clamp01(v, cv));
    Eigen::VectorXd out(plane.channels);
    interp_into(plane, k, out.data());
    return out;
}

Bounds Bounds::around(std::span<const double> positions, double margin) {
    if (positions.size() < 3 || positions.size() % 3 != 0) {
        throw InvalidInput("Bounds::around: need at least one 3D point");
    }
    Bounds b;
    b.min = Vec3::Constant(std::numeric_limits<double>::infinity());
    b.max = -b.min;
    for (std::size_t i = 0; i < positions.size(); i += 3) {
        for (int k = 0; k < 3; ++k) {
            b.min[k] = std::min(b.min[k], positions[i + k]);
            b.max[k] = std::max(b.max[k], positions[i + k]);
        }
    }
    for (int k = 0; k < 3; ++k) {
        double extent = b.max[k] - b.min[k];
        if (extent <= 0.0) extent = 1.0;
        b.min[k] -= margin * extent;
        b.max[k] += margin * extent;
    }
    return b;
}

HexPlaneField HexPlaneField::create(const FieldConfig& config, const Bounds& bounds, Rng& rng) {
    HexPlaneField f;
    f.config = config;
    f.bounds = bounds;
    if (config.use_planes) {
        for (int scale : config.multires) {
            std::array<PlaneGrid, 6> planes;
            for (int k = 0; k < 6; ++k) {
                PlaneGrid& p = planes[k];
                p.axes = kPlaneAxes[k];
                p.scale = scale;
                p.channels = config.channels;
                p.rows = config.resolution[p.axes[0]] * scale;
                p.cols = config.resolution[p.axes[1]] * scale;
                p.data.resize(static_cast<std::size_t>(p.rows) * p.cols * p.channels);
                for (double& x : p.data) x = rng.uniform(0.9, 1.1);
            }
            f.levels.push_back(std::move(planes));
        }
    }
    f.fusion = Mlp::create({f.fused_width(), config.hidden, config.feature_width}, rng);
    f.validate();
    return f;
}

int HexPlaneField::fused_width() const {
    return config.use_planes ? config.channels * static_cast<int>(config.multires.size()) : 4;
}

void HexPlaneField::validate() const {
    for (int k = 0; k < 3; ++k) {
        if (!(bounds.max[k] > bounds.min[k])) throw InvalidInput("field bounds are degenerate");
    }
    if (config.use_planes) {
        if (config.multires.empty()) throw ShapeError("field needs at least one level");
        if (levels.size() != config.multires.size()) {
            throw ShapeError("field level count does not match multires");
        }
        for (std::size_t l = 0; l < levels.size(); ++l) {
            for (int k = 0; k < 6; ++k) {
                const PlaneGrid& p = levels[l][k];
                if (p.axes != kPlaneAxes[k]) throw ShapeError("plane axes out of order");
                if (p.rows < 2 || p.cols < 2) throw ShapeError("plane dimensions must be >= 2");
                if (p.channels != config.channels) throw ShapeError("plane channel mismatch");
                if (p.data.size() != static_cast<std::size_t>(p.rows) * p.cols * p.channels) {
                    throw ShapeError("plane data size mismatch");
                }
                if (!all_finite(p.data.data(), p.data.size())) {
                    throw InvalidInput("plane values must be finite");
                }
            }
        }
    } else if (!levels.empty()) {
        throw ShapeError("MLP-only field must not carry planes");
    }
    fusion.validate();
    if (fusion.input_width() != fused_width()) throw ShapeError("fusion MLP input width mismatch");
}

GridQuery make_query(const Bounds& bounds, const Vec3& position, double t) {
    GridQuery q;
    for (int k = 0; k < 3; ++k) {
        const double u = (position[k] - bounds.min[k]) / (bounds.max[k] - bounds.min[k]);
        q.coord[k] = clamp01(u, q.clamped[k]);
    }
    q.coord[3] = clamp01(t, q.clamped[3]);
    return q;
}

Eigen::VectorXd fuse_planes(const HexPlaneField& field, const GridQuery& q) {
    const int h = field.config.channels;
    Eigen::VectorXd fh(field.fused_width());
    if (!field.config.use_planes) {
        for (int k = 0; k < 4; ++k) fh[k] = q.coord[k];
        return fh;
    }
    std::vector<double> tmp(static_cast<std::size_t>(h));
    for (std::size_t l = 0; l < field.levels.size(); ++l) {
        double* seg = fh.data() + l * h;
        std::fill(seg, seg + h, 1.0);
        for (int k = 0; k < 6; ++k) {
            const PlaneGrid& p = field.levels[l][k];
            const Corners c = corners(p, q.coord[p.axes[0]], q.coord[p.axes[1]]);
            interp_into(p, c, tmp.data());
            for (int ch = 0; ch < h; ++ch) seg[ch] *= tmp[ch];
        }
    }
    return fh;
}

Eigen::VectorXd encode(const HexPlaneField& field, const Vec3& position, double t,
                       Eigen::VectorXd* fused) {
    const GridQuery q = make_query(field.bounds, position, t);
    Eigen::VectorXd fh = fuse_planes(field, q);
    Eigen::VectorXd fd = field.fusion.forward(fh);
    if (fused) *fused = std::move(fh);
    return fd;
}

EncodeCache encode_batch(const HexPlaneField& field, std::span<const double> positions, double t) {
    if (positions.size() % 3 != 0) throw ShapeError("encode_batch: positions must be [N][3]");
    const std::size_t n = positions.size() / 3;
    EncodeCache cache;
    cache.queries.resize(n);
    cache.fused.resize(field.fused_width(), static_cast<Eigen::Index>(n));
    parallel_for(
        n,
        [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const Vec3 x(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
                cache.queries[i] = make_query(field.bounds, x, t);
                cache.fused.col(static_cast<Eigen::Index>(i)) = fuse_planes(field, cache.queries[i]);
            }
        },
        32);
    cache.features = field.fusion.forward(cache.fused, &cache.mlp);
    return cache;
}

FieldGrads FieldGrads::zeros_like(const HexPlaneField& field) {
    FieldGrads g;
    for (const auto& level : field.levels) {
        std::array<std::vector<double>, 6> planes;
        for (int k = 0; k < 6; ++k) planes[k].assign(level[k].data.size(), 0.0);
        g.planes.push_back(std::move(planes));
    }
    g.fusion = field.fusion.zeros_like();
    return g;
}

void FieldGrads::add(const FieldGrads& other) {
    if (planes.size() != other.planes.size()) throw ShapeError("FieldGrads::add: level mismatch");
    for (std::size_t l = 0; l < planes.size(); ++l) {
        for (int k = 0; k < 6; ++k) {
            auto& a = planes[l][k];
            const auto& b = other.planes[l][k];
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        }
    }
    for (std::size_t l = 0; l < fusion.layers.size(); ++l) {
        fusion.layers[l].weight += other.fusion.layers[l].weight;
        fusion.layers[l].bias += other.fusion.layers[l].bias;
    }
}

void encode_backward(const HexPlaneField& field, const EncodeCache& cache,
                     const Eigen::MatrixXd& d_features, FieldGrads& grads,
                     std::vector<double>* d_positions, std::vector<double>* d_times) {
    const std::size_t n = cache.queries.size();
    if (d_features.cols() != static_cast<Eigen::Index>(n) ||
        d_features.rows() != field.feature_width()) {
        throw ShapeError("encode_backward: gradient shape mismatch");
    }
    if (d_positions && d_positions->size() != 3 * n) throw ShapeError("encode_backward: d_positions size");
    if (d_times && d_times->size() != n) throw ShapeError("encode_backward: d_times size");

    const Eigen::MatrixXd d_fused = field.fusion.backward(cache.mlp, d_features, grads.fusion);
    std::vector<std::array<double, 4>> d_coord(n, std::array<double, 4>{});

    if (!field.config.use_planes) {
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 4; ++k) d_coord[i][k] = d_fused(k, static_cast<Eigen::Index>(i));
        }
    } else {
        const int h = field.config.channels;
        const std::size_t levels = field.levels.size();
        const std::size_t stride = levels * 6 * static_cast<std::size_t>(h);
        // dL/d(plane feature) for every query, level and plane.
        std::vector<double> d_feat(n * stride);
        parallel_for(
            n,
            [&](std::size_t b, std::size_t e) {
                std::vector<double> v(6 * static_cast<std::size_t>(h));
                std::vector<double> prefix(static_cast<std::size_t>(h));
                std::vector<double> suffix(static_cast<std::size_t>(h));
                for (std::size_t i = b; i < e; ++i) {
                    const GridQuery& q = cache.queries[i];
                    for (std::size_t l = 0; l < levels; ++l) {
                        std::array<Corners, 6> cs;
                        for (int k = 0; k < 6; ++k) {
                            const PlaneGrid& p = field.levels[l][k];
                            cs[k] = corners(p, q.coord[p.axes[0]], q.coord[p.axes[1]]);
                            interp_into(p, cs[k], v.data() + k * h);
                        }
                        const double* d_seg = d_fused.col(static_cast<Eigen::Index>(i)).data() + l * h;
                        double* out = d_feat.data() + i * stride + l * 6 * h;
                        // d(prod_k v_k)/dv_k = prod_{m != k} v_m via prefix/suffix products.
                        std::fill(prefix.begin(), prefix.end(), 1.0);
                        for (int k = 0; k < 6; ++k) {
                            for (int c = 0; c < h; ++c) {
                                out[k * h + c] = prefix[c];
                                prefix[c] *= v[k * h + c];
                            }
                        }
                        std::fill(suffix.begin(), suffix.end(), 1.0);
                        for (int k = 5; k >= 0; --k) {
                            for (int c = 0; c < h; ++c) {
                                out[k * h + c] *= suffix[c] * d_seg[c];
                                suffix[c] *= v[k * h + c];
                            }
                        }
                        for (int k = 0; k < 6; ++k) {
                            const PlaneGrid& p = field.levels[l][k];
                            const Corners& c = cs[k];
                            const double* d = p.data.data();
                            double du = 0.0, dv = 0.0;
                            for (int ch = 0; ch < h; ++ch) {
                                const double g = out[k * h + ch];
                                const double v00 = d[c.i00 + ch], v10 = d[c.i10 + ch];
                                const double v01 = d[c.i01 + ch], v11 = d[c.i11 + ch];
                                du += g * ((1.0 - c.b.frac) * (v10 - v00) + c.b.frac * (v11 - v01));
                                dv += g * ((1.0 - c.a.frac) * (v01 - v00) + c.a.frac * (v11 - v10));
                            }
                            d_coord[i][p.axes[0]] += du * (p.rows - 1);
                            d_coord[i][p.axes[1]] += dv * (p.cols - 1);
                        }
                    }
                }
            },
            16);

        // Scatter into the planes; each plane walks the queries in order.
        parallel_for(levels * 6, [&](std::size_t b, std::size_t e) {
            for (std::size_t pk = b; pk < e; ++pk) {
                const std::size_t l = pk / 6;
                const int k = static_cast<int>(pk % 6);
                const PlaneGrid& p = field.levels[l][k];
                double* g = grads.planes[l][k].data();
                for (std::size_t i = 0; i < n; ++i) {
                    const GridQuery& q = cache.queries[i];
                    const Corners c = corners(p, q.coord[p.axes[0]], q.coord[p.axes[1]]);
                    const double* src = d_feat.data() + i * stride + (l * 6 + k) * h;
                    for (int ch = 0; ch < h; ++ch) {
                        g[c.i00 + ch] += c.w00 * src[ch];
                        g[c.i10 + ch] += c.w10 * src[ch];
                        g[c.i01 + ch] += c.w01 * src[ch];
                        g[c.i11 + ch] += c.w11 * src[ch];
                    }
                }
            }
        });
    }

    for (std::size_t i = 0; i < n; ++i) {
        const GridQuery& q = cache.queries[i];
        if (d_positions) {
            for (int k = 0; k < 3; ++k) {
                if (q.clamped[k]) continue;
                (*d_positions)[3 * i + k] +=
                    d_coord[i][k] / (field.bounds.max[k] - field.bounds.min[k]);
            }
        }
        if (d_times && !q.clamped[3]) (*d_times)[i] += d_coord[i][3];
    }
}

namespace {

std::size_t tv_term_count(const HexPlaneField& field) {
    std::size_t terms = 0;
    for (const auto& level : field.levels) {
        for (const PlaneGrid& p : level) {
            terms += static_cast<std::size_t>(p.channels) *
                     (static_cast<std::size_t>(p.rows) * (p.cols - 1) +
                      static_cast<std::size_t>(p.rows - 1) * p.cols);
        }
    }
    return terms;
}

} // namespace

double tv_loss(const HexPlaneField& field) {
    const std::size_t terms = tv_term_count(field);
    if (terms == 0) return 0.0;
    double sum = 0.0;
    for (const auto& level : field.levels) {
        for (const PlaneGrid& p : level) {
            const double* d = p.data.data();
            const int h = p.channels;
            for (int a = 0; a < p.rows; ++a) {
                for (int b = 0; b < p.cols; ++b) {
                    const std::size_t o = p.index(a, b);
                    if (b + 1 < p.cols) {
                        const std::size_t r = p.index(a, b + 1);
                        for (int c = 0; c < h; ++c) {
                            const double diff = d[r + c] - d[o + c];
                            sum += diff * diff;
                        }
                    }
                    if (a + 1 < p.rows) {
                        const std::size_t dn = p.index(a + 1, b);
                        for (int c = 0; c < h; ++c) {
                            const double diff = d[dn + c] - d[o + c];
                            sum += diff * diff;
                        }
                    }
                }
            }
        }
    }
    return sum / static_cast<double>(terms);
}

void tv_loss_backward(const HexPlaneField& field, double weight, FieldGrads& grads) {
    const std::size_t terms = tv_term_count(field);
    if (terms == 0 || weight == 0.0) return;
    const double s = 2.0 * weight / static_cast<double>(terms);
    parallel_for(field.levels.size() * 6, [&](std::size_t b, std::size_t e) {
        for (std::size_t pk = b; pk < e; ++pk) {
            const PlaneGrid& p = field.levels[pk / 6][pk % 6];
            double* g = grads.planes[pk / 6][pk % 6].data();
            const double* d = p.data.data();
            const int h = p.channels;
            for (int a = 0; a < p.rows; ++a) {
                for (int bb = 0; bb < p.cols; ++bb) {
                    const std::size_t o = p.index(a, bb);
                    if (bb + 1 < p.cols) {
                        const std::size_t r = p.index(a, bb + 1);
                        for (int c = 0; c < h; ++c) {
                            const double diff = s * (d[r + c] - d[o + c]);
                            g[r + c] += diff;
                            g[o + c] -= diff;
                        }
                    }
                    if (a + 1 < p.rows) {
                        const std::size_t dn = p.index(a + 1, bb);
                        for (int c = 0; c < h; ++c) {
                            const double diff = s * (d[dn + c] - d[o + c]);
                            g[dn + c] += diff;
                            g[o + c] -= diff;
                        }
                    }
                }
            }
        }
    });
}

std::uint64_t encode_signature(const HexPlaneField& field, const EncodeCache& cache) {
    std::uint64_t h = relu_signature(cache.mlp, 0x51);
    auto put = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    for (const GridQuery& q : cache.queries) {
        for (int k = 0; k < 4; ++k) put(q.clamped[k] ? 1 : 0);
        for (const auto& level : field.levels) {
            for (const PlaneGrid& p : level) {
                put(static_cast<std::uint64_t>(locate(q.coord[p.axes[0]], p.rows).lo));
                put(static_cast<std::uint64_t>(locate(q.coord[p.axes[1]], p.cols).lo));
            }
        }
    }
    return h;
}

} // namespace gs4d
