#include "gs4d/sh.hpp"

#include "gs4d/error.hpp"

#include <string>

namespace gs4d {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

} // namespace

std::array<double, 16> sh_basis(const Vec3& dir, int degree) {
    std::array<double, 16> y{};
    const double x = dir[0], yy_ = dir[1], z = dir[2];
    y[0] = kC0;
    if (degree < 1) return y;
    y[1] = -kC1 * yy_;
    y[2] = kC1 * z;
    y[3] = -kC1 * x;
    if (degree < 2) return y;
    const double xx = x * x, yy = yy_ * yy_, zz = z * z;
    const double xy = x * yy_, yz = yy_ * z, xz = x * z;
    y[4] = kC2[0] * xy;
    y[5] = kC2[1] * yz;
    y[6] = kC2[2] * (2.0 * zz - xx - yy);
    y[7] = kC2[3] * xz;
    y[8] = kC2[4] * (xx - yy);
    if (degree < 3) return y;
    y[9] = kC3[0] * yy_ * (3.0 * xx - yy);
    y[10] = kC3[1] * xy * z;
    y[11] = kC3[2] * yy_ * (4.0 * zz - xx - yy);
    y[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    y[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    y[14] = kC3[5] * z * (xx - yy);
    y[15] = kC3[6] * x * (xx - 3.0 * yy);
    return y;
}

std::array<Vec3, 16> sh_basis_gradient(const Vec3& dir, int degree) {
    std::array<Vec3, 16> g;
    for (auto& v : g) v.setZero();
    if (degree < 1) return g;
    const double x = dir[0], y = dir[1], z = dir[2];
    g[1] = Vec3(0.0, -kC1, 0.0);
    g[2] = Vec3(0.0, 0.0, kC1);
    g[3] = Vec3(-kC1, 0.0, 0.0);
    if (degree < 2) return g;
    const double xx = x * x, yy = y * y, zz = z * z;
    g[4] = kC2[0] * Vec3(y, x, 0.0);
    g[5] = kC2[1] * Vec3(0.0, z, y);
    g[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = kC2[3] * Vec3(z, 0.0, x);
    g[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return g;
    g[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    g[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    return g;
}

Vec3 eval_sh(std::span<const double> coeffs, const Vec3& dir, int degree) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw ShapeError("eval_sh: degree must lie in [0, 3]");
    }
    const int k = sh_basis_count(degree);
    if (coeffs.size() != static_cast<std::size_t>(3 * k)) {
        throw ShapeError("eval_sh: expected " + std::to_string(3 * k) + " coefficients, got " +
                         std::to_string(coeffs.size()));
    }
    if (!dir.allFinite() || std::abs(dir.norm() - 1.0) > 1e-6) {
        throw InvalidInput("eval_sh: view direction must be unit length");
    }
    const auto y = sh_basis(dir, degree);
    Vec3 rgb = Vec3::Constant(0.5);
    for (int b = 0; b < k; ++b) {
        for (int ch = 0; ch < 3; ++ch) rgb[ch] += coeffs[static_cast<std::size_t>(3 * b + ch)] * y[b];
    }
    return rgb;
}

Vec3 eval_sh(const GaussianSet& set, std::size_t i, const Vec3& dir) {
    const int k = set.basis_count();
    const auto y = sh_basis(dir, set.sh_degree);
    Vec3 rgb = Vec3::Constant(0.5);
    for (int b = 0; b < k; ++b) {
        for (int ch = 0; ch < 3; ++ch) rgb[ch] += set.sh(i, b, ch) * y[b];
    }
    return rgb;
}

Vec3 eval_sh_backward(const GaussianSet& set, std::size_t i, const Vec3& dir, const Vec3& d_rgb,
                      GaussianGrads& grads) {
    const int k = set.basis_count();
    const auto y = sh_basis(dir, set.sh_degree);
    for (int ch = 0; ch < 3; ++ch) grads.sh_dc[3 * i + ch] += y[0] * d_rgb[ch];
    Vec3 d_dir = Vec3::Zero();
    if (k == 1) return d_dir;
    const auto dy = sh_basis_gradient(dir, set.sh_degree);
    const std::size_t stride = set.rest_stride();
    for (int b = 1; b < k; ++b) {
        double s = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
            grads.sh_rest[i * stride + static_cast<std::size_t>(b - 1) * 3 + ch] += y[b] * d_rgb[ch];
            s += set.sh(i, b, ch) * d_rgb[ch];
        }
        d_dir += s * dy[b];
    }
    return d_dir;
}

} // namespace gs4d
