#pragma once

#include "gs4d/gaussian.hpp"
#include "gs4d/math.hpp"

#include <array>
#include <span>

namespace gs4d {

/// Real SH basis values Y_0..Y_{k-1} at a unit direction, k = (degree+1)^2.
/// Ordering and signs follow the usual splatting convention
/// (index l*l + l + m, with Y_1 = -c y, Y_2 = c z, Y_3 = -c x, ...).
std::array<double, 16> sh_basis(const Vec3& dir, int degree);

/// Jacobian of sh_basis w.r.t. the (unnormalised) Cartesian components of dir.
std::array<Vec3, 16> sh_basis_gradient(const Vec3& dir, int degree);

/// rgb = sum_k c_k Y_k(dir) + 0.5, before any clamping.
/// `coeffs` is row-major [k][3]. Throws ShapeError if its size is not 3k and
/// InvalidInput if |dir| differs from 1 by more than 1e-6.
Vec3 eval_sh(std::span<const double> coeffs, const Vec3& dir, int degree);

/// Same as eval_sh reading the coefficients of Gaussian i; no direction check.
Vec3 eval_sh(const GaussianSet& set, std::size_t i, const Vec3& dir);

/// Reverse pass of eval_sh for Gaussian i. Adds coefficient gradients into
/// `grads` and returns dL/ddir.
Vec3 eval_sh_backward(const GaussianSet& set, std::size_t i, const Vec3& dir, const Vec3& d_rgb,
                      GaussianGrads& grads);

} // namespace gs4d
