#include "gs4d/gaussian.hpp"

#include "gs4d/error.hpp"

#include <string>

namespace gs4d {

namespace {

constexpr double kDetGuard = 1e-18;

template <typename T>
void keep_rows(std::vector<T>& v, std::size_t width, const std::vector<bool>& mask) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        if (out != i) {
            for (std::size_t k = 0; k < width; ++k) v[out * width + k] = v[i * width + k];
        }
        ++out;
    }
    v.resize(out * width);
}

template <typename T>
void append_row(std::vector<T>& dst, const std::vector<T>& src, std::size_t width, std::size_t i) {
    dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(i * width),
               src.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
}

} // namespace

void GaussianSet::resize(std::size_t n) {
    positions.resize(3 * n, 0.0);
    rotations.resize(4 * n, 0.0);
    scales.resize(3 * n, 0.0);
    opacities.resize(n, 0.0);
    sh_dc.resize(3 * n, 0.0);
    sh_rest.resize(rest_stride() * n, 0.0);
}

void GaussianSet::push_back_from(const GaussianSet& other, std::size_t i) {
    if (other.sh_degree != sh_degree) throw ShapeError("push_back_from: SH degree mismatch");
    append_row(positions, other.positions, 3, i);
    append_row(rotations, other.rotations, 4, i);
    append_row(scales, other.scales, 3, i);
    append_row(opacities, other.opacities, 1, i);
    append_row(sh_dc, other.sh_dc, 3, i);
    append_row(sh_rest, other.sh_rest, rest_stride(), i);
}

void GaussianSet::keep(const std::vector<bool>& mask) {
    if (mask.size() != size()) throw ShapeError("keep: mask length does not match set size");
    keep_rows(positions, 3, mask);
    keep_rows(rotations, 4, mask);
    keep_rows(scales, 3, mask);
    keep_rows(opacities, 1, mask);
    keep_rows(sh_dc, 3, mask);
    keep_rows(sh_rest, rest_stride(), mask);
}

void GaussianSet::validate() const {
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw ShapeError("sh_degree must lie in [0, 3], got " + std::to_string(sh_degree));
    }
    const std::size_t n = size();
    auto check = [n](const std::vector<double>& v, std::size_t width, const char* name) {
        if (v.size() != n * width) {
            throw ShapeError(std::string("GaussianSet.") + name + " has " +
                             std::to_string(v.size()) + " entries, expected " +
                             std::to_string(n * width));
        }
    };
    check(positions, 3, "positions");
    check(rotations, 4, "rotations");
    check(scales, 3, "scales");
    check(sh_dc, 3, "sh_dc");
    check(sh_rest, rest_stride(), "sh_rest");
}

Mat3 Covariance3::matrix() const {
    Mat3 a;
    a << m[0], m[1], m[2], m[1], m[3], m[4], m[2], m[4], m[5];
    return a;
}

Covariance3 Covariance3::from_matrix(const Mat3& a) {
    return Covariance3{{a(0, 0), a(0, 1), a(0, 2), a(1, 1), a(1, 2), a(2, 2)}};
}

Covariance3 build_covariance(const Vec3& scale, const Vec4& rotation) {
    if (!scale.allFinite() || !rotation.allFinite()) {
        throw InvalidInput("build_covariance: non-finite scale or rotation");
    }
    const Mat3 r = quat_to_matrix(rotation);
    Mat3 m = r;
    for (int k = 0; k < 3; ++k) m.col(k) *= scale[k];
    // Only the upper triangle is read, so the stored matrix is exactly symmetric.
    return Covariance3::from_matrix(m * m.transpose());
}

void build_covariance_backward(const Vec3& scale, const Vec4& rotation, const Mat3& d_cov,
                               Vec3& d_scale, Vec4& d_rotation) {
    const Mat3 r = quat_to_matrix(rotation);
    Mat3 m = r;
    for (int k = 0; k < 3; ++k) m.col(k) *= scale[k];
    const Mat3 sym = 0.5 * (d_cov + d_cov.transpose());
    const Mat3 d_m = 2.0 * sym * m;
    Mat3 d_r;
    for (int k = 0; k < 3; ++k) {
        d_scale[k] = d_m.col(k).dot(r.col(k));
        d_r.col(k) = d_m.col(k) * scale[k];
    }
    d_rotation = quat_to_matrix_backward(rotation, d_r);
}

Mat3 invert_symmetric3(const Covariance3& cov) {
    const double a = cov.xx(), b = cov.xy(), c = cov.xz();
    const double d = cov.yy(), e = cov.yz(), f = cov.zz();
    const double c00 = d * f - e * e;
    const double c01 = c * e - b * f;
    const double c02 = b * e - c * d;
    const double det = a * c00 + b * c01 + c * c02;
    if (!(std::abs(det) > kDetGuard)) {
        throw NumericalError("covariance is singular (|det| <= 1e-18)");
    }
    const double inv = 1.0 / det;
    Mat3 out;
    out(0, 0) = c00 * inv;
    out(0, 1) = out(1, 0) = c01 * inv;
    out(0, 2) = out(2, 0) = c02 * inv;
    out(1, 1) = (a * f - c * c) * inv;
    out(1, 2) = out(2, 1) = (b * c - a * e) * inv;
    out(2, 2) = (a * d - b * b) * inv;
    return out;
}

double eval_density(const Covariance3& cov, const Vec3& x) {
    const Mat3 inv = invert_symmetric3(cov);
    return std::exp(-0.5 * x.dot(inv * x));
}

void eval_density_backward(const Covariance3& cov, const Vec3& x, double d_out, Vec3& d_x,
                           Mat3& d_cov) {
    const Mat3 inv = invert_symmetric3(cov);
    const Vec3 y = inv * x;
    const double g = std::exp(-0.5 * x.dot(y));
    // d/dx = -g Sigma^-1 x ; d/dSigma = 1/2 g Sigma^-1 x x^T Sigma^-1
    d_x = -g * d_out * y;
    d_cov = 0.5 * g * d_out * (y * y.transpose());
}

Vec4 normalize_quaternion(const Vec4& raw) {
    const double n = raw.norm();
    if (!std::isfinite(n) || n == 0.0) {
        throw InvalidInput("rotation quaternion must be finite and nonzero");
    }
    return raw / n;
}

Vec4 normalize_quaternion_backward(const Vec4& raw, const Vec4& d_unit) {
    const double n = raw.norm();
    const Vec4 q = raw / n;
    return (d_unit - q * q.dot(d_unit)) / n;
}

ActivatedGaussian activate(const GaussianSet& set, std::size_t i) {
    ActivatedGaussian g;
    g.position = set.position(i);
    g.rotation = normalize_quaternion(set.rotation(i));
    const Vec3 s = set.scale(i);
    g.scale = Vec3(std::exp(s[0]), std::exp(s[1]), std::exp(s[2]));
    g.opacity = sigmoid(set.opacities[i]);
    return g;
}

ActivatedSet activate(const GaussianSet& set) {
    set.validate();
    ActivatedSet out;
    out.source = &set;
    out.gaussians.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) out.gaussians.push_back(activate(set, i));
    return out;
}

GaussianGrads GaussianGrads::zeros_like(const GaussianSet& set) {
    GaussianGrads g;
    g.positions.assign(set.positions.size(), 0.0);
    g.rotations.assign(set.rotations.size(), 0.0);
    g.scales.assign(set.scales.size(), 0.0);
    g.opacities.assign(set.opacities.size(), 0.0);
    g.sh_dc.assign(set.sh_dc.size(), 0.0);
    g.sh_rest.assign(set.sh_rest.size(), 0.0);
    return g;
}

void GaussianGrads::add(const GaussianGrads& other) {
    auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) throw ShapeError("GaussianGrads::add: size mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    acc(positions, other.positions);
    acc(rotations, other.rotations);
    acc(scales, other.scales);
    acc(opacities, other.opacities);
    acc(sh_dc, other.sh_dc);
    acc(sh_rest, other.sh_rest);
}

} // namespace gs4d
