#include "gs4d/deform.hpp"

#include "gs4d/error.hpp"

#include <string>

namespace gs4d {

int DeformNet::output_width(Head h, int sh_degree) {
    switch (h) {
    case Head::Position: return 3;
    case Head::Rotation: return 4;
    case Head::Scale: return 3;
    case Head::Color: return sh_basis_count(sh_degree) * 3;
    case Head::Opacity: return 1;
    }
    return 0;
}

DeformNet DeformNet::create(const DeformConfig& config, int feature_width, int sh_degree, Rng& rng) {
    if (config.width < 1) throw InvalidInput("deform head width must be positive");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidInput("sh_degree must be in [0, 3]");
    DeformNet net;
    net.config = config;
    net.sh_degree = sh_degree;
    for (int k = 0; k < kHeadCount; ++k) {
        if (!config.enabled[k]) continue;
        net.heads[k] = Mlp::create(
            {feature_width, config.width, output_width(static_cast<Head>(k), sh_degree)}, rng, true);
    }
    return net;
}

DeformNet DeformNet::zeros_like() const {
    DeformNet z;
    z.config = config;
    z.sh_degree = sh_degree;
    for (int k = 0; k < kHeadCount; ++k) z.heads[k] = heads[k].zeros_like();
    return z;
}

void DeformNet::add(const DeformNet& other) {
    for (int k = 0; k < kHeadCount; ++k) {
        if (heads[k].layers.size() != other.heads[k].layers.size()) {
            throw ShapeError("DeformNet::add: head shape mismatch");
        }
        for (std::size_t l = 0; l < heads[k].layers.size(); ++l) {
            heads[k].layers[l].weight += other.heads[k].layers[l].weight;
            heads[k].layers[l].bias += other.heads[k].layers[l].bias;
        }
    }
}

void DeformNet::validate(int feature_width) const {
    for (int k = 0; k < kHeadCount; ++k) {
        const Mlp& m = heads[k];
        if (!config.enabled[k]) {
            if (!m.layers.empty()) throw ShapeError("disabled deform head carries layers");
            continue;
        }
        m.validate();
        if (m.layers.empty()) throw ShapeError("enabled deform head has no layers");
        if (m.input_width() != feature_width) throw ShapeError("deform head input width mismatch");
        if (m.output_width() != output_width(static_cast<Head>(k), sh_degree)) {
            throw ShapeError("deform head output width mismatch");
        }
        for (const auto& p : m.parameters()) {
            if (!all_finite(p.data(), p.size())) throw InvalidInput("deform head has non-finite weights");
        }
    }
}

GaussianSet deform(const GaussianSet& set, const HexPlaneField& field, const DeformNet& net,
                   double t, DeformCache* cache) {
    set.validate();
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("deform: t must lie in [0, 1]");
    if (net.sh_degree != set.sh_degree && net.enabled(Head::Color)) {
        throw ShapeError("deform: colour head SH degree does not match the set");
    }
    DeformCache local;
    DeformCache& c = cache ? *cache : local;
    c = DeformCache{};
    c.t = t;

    const std::size_t n = set.size();
    GaussianSet out = set;
    c.quat_fallback.assign(n, false);
    if (n == 0) return out;

    c.encode = encode_batch(field, set.positions, t);
    const Eigen::MatrixXd& fd = c.encode.features;

    if (net.enabled(Head::Position)) {
        const Eigen::MatrixXd d = net.head(Head::Position).forward(fd, &c.heads[0]);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) out.positions[3 * i + k] += d(k, static_cast<Eigen::Index>(i));
        }
    }
    if (net.enabled(Head::Rotation)) {
        const Eigen::MatrixXd d = net.head(Head::Rotation).forward(fd, &c.heads[1]);
        for (std::size_t i = 0; i < n; ++i) {
            Vec4 r = set.rotation(i) + d.col(static_cast<Eigen::Index>(i));
            if (!(r.norm() > kMinQuaternionNorm)) {
                c.quat_fallback[i] = true;
                ++c.quat_violations;
                continue;
            }
            for (int k = 0; k < 4; ++k) out.rotations[4 * i + k] = r[k];
        }
    }
    if (net.enabled(Head::Scale)) {
        const Eigen::MatrixXd d = net.head(Head::Scale).forward(fd, &c.heads[2]);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) out.scales[3 * i + k] += d(k, static_cast<Eigen::Index>(i));
        }
    }
    if (net.enabled(Head::Color)) {
        const Eigen::MatrixXd d = net.head(Head::Color).forward(fd, &c.heads[3]);
        const std::size_t rs = set.rest_stride();
        for (std::size_t i = 0; i < n; ++i) {
            const auto col = d.col(static_cast<Eigen::Index>(i));
            for (int k = 0; k < 3; ++k) out.sh_dc[3 * i + k] += col[k];
            for (std::size_t k = 0; k < rs; ++k) out.sh_rest[i * rs + k] += col[static_cast<Eigen::Index>(3 + k)];
        }
    }
    if (net.enabled(Head::Opacity)) {
        const Eigen::MatrixXd d = net.head(Head::Opacity).forward(fd, &c.heads[4]);
        for (std::size_t i = 0; i < n; ++i) out.opacities[i] += d(0, static_cast<Eigen::Index>(i));
    }
    return out;
}

void deform_backward(const GaussianSet& set, const HexPlaneField& field, const DeformNet& net,
                     const DeformCache& cache, const GaussianGrads& d_deformed,
                     GaussianGrads& d_set, FieldGrads& d_field, DeformNet& d_net) {
    const std::size_t n = set.size();
    if (cache.quat_fallback.size() != n) throw ShapeError("deform_backward: stale cache");
    if (d_deformed.opacities.size() != n || d_set.opacities.size() != n) {
        throw ShapeError("deform_backward: gradient size mismatch");
    }
    // Additive paths are the identity.
    auto add = [](std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    add(d_set.positions, d_deformed.positions);
    add(d_set.rotations, d_deformed.rotations);
    add(d_set.scales, d_deformed.scales);
    add(d_set.opacities, d_deformed.opacities);
    add(d_set.sh_dc, d_deformed.sh_dc);
    add(d_set.sh_rest, d_deformed.sh_rest);
    if (n == 0) return;

    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd d_fd = Eigen::MatrixXd::Zero(field.feature_width(), N);
    auto run_head = [&](Head h, const Eigen::MatrixXd& d_out) {
        const int k = static_cast<int>(h);
        d_fd += net.heads[k].backward(cache.heads[k], d_out, d_net.heads[k]);
    };

    if (net.enabled(Head::Position)) {
        Eigen::MatrixXd d(3, N);
        for (Eigen::Index i = 0; i < N; ++i) {
            for (int k = 0; k < 3; ++k) d(k, i) = d_deformed.positions[3 * i + k];
        }
        run_head(Head::Position, d);
    }
    if (net.enabled(Head::Rotation)) {
        Eigen::MatrixXd d(4, N);
        for (Eigen::Index i = 0; i < N; ++i) {
            const bool fb = cache.quat_fallback[static_cast<std::size_t>(i)];
            for (int k = 0; k < 4; ++k) d(k, i) = fb ? 0.0 : d_deformed.rotations[4 * i + k];
        }
        run_head(Head::Rotation, d);
    }
    if (net.enabled(Head::Scale)) {
        Eigen::MatrixXd d(3, N);
        for (Eigen::Index i = 0; i < N; ++i) {
            for (int k = 0; k < 3; ++k) d(k, i) = d_deformed.scales[3 * i + k];
        }
        run_head(Head::Scale, d);
    }
    if (net.enabled(Head::Color)) {
        const std::size_t rs = set.rest_stride();
        Eigen::MatrixXd d(static_cast<Eigen::Index>(3 + rs), N);
        for (Eigen::Index i = 0; i < N; ++i) {
            for (int k = 0; k < 3; ++k) d(k, i) = d_deformed.sh_dc[3 * i + k];
            for (std::size_t k = 0; k < rs; ++k) {
                d(static_cast<Eigen::Index>(3 + k), i) = d_deformed.sh_rest[static_cast<std::size_t>(i) * rs + k];
            }
        }
        run_head(Head::Color, d);
    }
    if (net.enabled(Head::Opacity)) {
        Eigen::MatrixXd d(1, N);
        for (Eigen::Index i = 0; i < N; ++i) d(0, i) = d_deformed.opacities[static_cast<std::size_t>(i)];
        run_head(Head::Opacity, d);
    }

    encode_backward(field, cache.encode, d_fd, d_field, &d_set.positions, nullptr);
}

GaussianSet compose(std::span<const GaussianSet> sets) {
    GaussianSet out;
    if (sets.empty()) return out;
    out.sh_degree = sets.front().sh_degree;
    for (const GaussianSet& s : sets) {
        s.validate();
        if (s.sh_degree != out.sh_degree) {
            throw ShapeError("compose: SH degree " + std::to_string(s.sh_degree) + " does not match " +
                             std::to_string(out.sh_degree));
        }
        auto append = [](std::vector<double>& a, const std::vector<double>& b) {
            a.insert(a.end(), b.begin(), b.end());
        };
        append(out.positions, s.positions);
        append(out.rotations, s.rotations);
        append(out.scales, s.scales);
        append(out.opacities, s.opacities);
        append(out.sh_dc, s.sh_dc);
        append(out.sh_rest, s.sh_rest);
    }
    return out;
}

} // namespace gs4d
