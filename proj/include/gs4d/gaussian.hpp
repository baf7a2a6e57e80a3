#pragma once

#include "gs4d/math.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace gs4d {

constexpr int kMaxShDegree = 3;

/// Number of SH basis functions per colour channel for a degree.
constexpr int sh_basis_count(int degree) {
    return (degree + 1) * (degree + 1);
}

/// Structure-of-arrays storage of raw (pre-activation) Gaussian parameters.
///
/// Layouts, with N = size():
///   - positions:  [N][3]          world-space centres
///   - rotations:  [N][4]          unnormalised quaternion (w, x, y, z)
///   - scales:     [N][3]          log scale, exp() gives the axis lengths
///   - opacities:  [N]             logit, sigmoid() gives opacity
///   - sh_dc:      [N][3]          degree-0 SH coefficient per channel
///   - sh_rest:    [N][k-1][3]     higher-order SH coefficients
struct GaussianSet {
    int sh_degree = 0;
    std::vector<double> positions;
    std::vector<double> rotations;
    std::vector<double> scales;
    std::vector<double> opacities;
    std::vector<double> sh_dc;
    std::vector<double> sh_rest;

    std::size_t size() const { return opacities.size(); }
    bool empty() const { return opacities.empty(); }
    int basis_count() const { return sh_basis_count(sh_degree); }
    std::size_t rest_stride() const { return static_cast<std::size_t>(basis_count() - 1) * 3; }

    /// Resizes every array to n Gaussians; new rows are zero.
    void resize(std::size_t n);

    /// Appends Gaussian `i` of `other`.
    void push_back_from(const GaussianSet& other, std::size_t i);

    /// Keeps only rows whose mask entry is true, preserving order.
    void keep(const std::vector<bool>& mask);

    Vec3 position(std::size_t i) const {
        return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
    }
    Vec4 rotation(std::size_t i) const {
        return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
    }
    Vec3 scale(std::size_t i) const {
        return {scales[3 * i], scales[3 * i + 1], scales[3 * i + 2]};
    }

    /// SH coefficient `basis` of channel `ch` for Gaussian i.
    double sh(std::size_t i, int basis, int ch) const {
        return basis == 0 ? sh_dc[3 * i + ch]
                          : sh_rest[i * rest_stride() + static_cast<std::size_t>(basis - 1) * 3 + ch];
    }

    /// Throws ShapeError if array lengths disagree with size().
    void validate() const;

    bool operator==(const GaussianSet&) const = default;
};

/// Symmetric 3x3 matrix stored as its 6 unique entries (xx, xy, xz, yy, yz, zz).
struct Covariance3 {
    std::array<double, 6> m{};

    double xx() const { return m[0]; }
    double xy() const { return m[1]; }
    double xz() const { return m[2]; }
    double yy() const { return m[3]; }
    double yz() const { return m[4]; }
    double zz() const { return m[5]; }

    Mat3 matrix() const;
    static Covariance3 from_matrix(const Mat3& a);
};

/// Sigma = R diag(s^2) R^T. Throws InvalidInput on non-finite arguments.
Covariance3 build_covariance(const Vec3& scale, const Vec4& rotation);

/// Reverse pass of build_covariance. `d_cov` is dL/dSigma as a full symmetric
/// matrix; outputs are gradients w.r.t. scale and the unit quaternion.
void build_covariance_backward(const Vec3& scale, const Vec4& rotation, const Mat3& d_cov,
                               Vec3& d_scale, Vec4& d_rotation);

/// exp(-1/2 x^T Sigma^-1 x). Throws NumericalError when |det Sigma| <= 1e-18.
double eval_density(const Covariance3& cov, const Vec3& x);

/// Gradients of eval_density w.r.t. the offset and the full covariance matrix.
void eval_density_backward(const Covariance3& cov, const Vec3& x, double d_out, Vec3& d_x,
                           Mat3& d_cov);

/// Closed-form adjugate inverse; throws NumericalError when |det| <= 1e-18.
Mat3 invert_symmetric3(const Covariance3& cov);

/// Activated attributes of one Gaussian.
struct ActivatedGaussian {
    Vec3 position;
    Vec4 rotation; // unit quaternion
    Vec3 scale;    // strictly positive
    double opacity = 0.0;
};

/// Activated view over a whole set. SH coefficients keep their raw values.
struct ActivatedSet {
    std::vector<ActivatedGaussian> gaussians;
    const GaussianSet* source = nullptr;

    std::size_t size() const { return gaussians.size(); }
};

ActivatedGaussian activate(const GaussianSet& set, std::size_t i);
ActivatedSet activate(const GaussianSet& set);

/// Normalises a raw quaternion. Throws InvalidInput for zero or non-finite input.
Vec4 normalize_quaternion(const Vec4& raw);

/// dL/draw given dL/dq for q = raw / |raw|.
Vec4 normalize_quaternion_backward(const Vec4& raw, const Vec4& d_unit);

/// Gradients w.r.t. raw parameters, same layout as GaussianSet.
struct GaussianGrads {
    std::vector<double> positions;
    std::vector<double> rotations;
    std::vector<double> scales;
    std::vector<double> opacities;
    std::vector<double> sh_dc;
    std::vector<double> sh_rest;

    static GaussianGrads zeros_like(const GaussianSet& set);
    void add(const GaussianGrads& other);
};

} // namespace gs4d
