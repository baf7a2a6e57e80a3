#pragma once

#include "gs4d/math.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace gs4d {

/// Row-major H x W x 3 image with values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    static Image filled(int w, int h, const Vec3& rgb);

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width + x) * 3;
    }
    double& at(int x, int y, int c) { return data[offset(x, y) + c]; }
    double at(int x, int y, int c) const { return data[offset(x, y) + c]; }
    Vec3 pixel(int x, int y) const {
        const std::size_t o = offset(x, y);
        return {data[o], data[o + 1], data[o + 2]};
    }

    bool operator==(const Image&) const = default;
};

/// Maps [0,1] to a byte with round-half-up: floor(v * 255 + 0.5), clamped.
unsigned char quantize_channel(double v);

/// Reads an 8-bit PNG (gray, RGB or RGBA). Alpha is composited over
/// `background`. Throws FormatError for non-PNG input.
Image read_image(const std::filesystem::path& path, const Vec3& background = Vec3::Ones());

/// (width, height) from a PNG header. Throws FormatError for non-PNG input.
std::pair<int, int> image_size(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG through a temporary file and an atomic rename.
void write_image(const std::filesystem::path& path, const Image& image);

} // namespace gs4d
