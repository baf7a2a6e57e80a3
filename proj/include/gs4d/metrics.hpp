#pragma once

#include "gs4d/image.hpp"

namespace gs4d {

constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all channels, capped at 100 dB.
/// Throws ShapeError on size mismatch.
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, averaged over every fully covered window
/// position and channel. Throws InvalidInput for images smaller than 11x11.
double ssim(const Image& a, const Image& b);

} // namespace gs4d
