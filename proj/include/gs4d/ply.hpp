#pragma once

#include "gs4d/gaussian.hpp"

#include <filesystem>
#include <vector>

namespace gs4d {

struct PointCloud {
    std::vector<double> positions; // [N][3]
    std::vector<double> colors;    // [N][3] in [0, 1], empty when absent

    std::size_t size() const { return positions.size() / 3; }
};

/// Reads vertices from an ASCII or binary little-endian PLY. Uses x, y, z
/// and, when all present, red, green, blue (uchar maps to [0, 1]).
/// Throws ParseError on malformed headers or truncated data.
PointCloud read_ply_points(const std::filesystem::path& path);

/// Writes a binary little-endian PLY with float x, y, z and uchar colours.
void write_ply_points(const std::filesystem::path& path, const PointCloud& cloud);

/// Writes Gaussians with the common splat property layout (x y z, nx ny nz,
/// f_dc_*, f_rest_*, opacity, scale_*, rot_*) as binary little-endian float.
void write_ply_gaussians(const std::filesystem::path& path, const GaussianSet& set);

} // namespace gs4d
