#include "gs4d/image.hpp"

#include "gs4d/error.hpp"
#include "gs4d/io_util.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace gs4d {

Image Image::filled(int w, int h, const Vec3& rgb) {
    Image img(w, h);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = rgb[c];
    }
    return img;
}

unsigned char quantize_channel(double v) {
    const double q = std::floor(v * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp(q, 0.0, 255.0));
}

namespace {

void check_signature(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open image: " + path.string());
    unsigned char sig[8] = {};
    f.read(reinterpret_cast<char*>(sig), 8);
    if (f.gcount() != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError("not a PNG file: " + path.string());
    }
}

png_image open_png(const std::filesystem::path& path) {
    check_signature(path);
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw FormatError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    return png;
}

} // namespace

std::pair<int, int> image_size(const std::filesystem::path& path) {
    png_image png = open_png(path);
    const std::pair<int, int> size{static_cast<int>(png.width), static_cast<int>(png.height)};
    png_image_free(&png);
    return size;
}

Image read_image(const std::filesystem::path& path, const Vec3& background) {
    png_image png = open_png(path);
    png.format = PNG_FORMAT_RGBA;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        throw FormatError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    Image img(static_cast<int>(png.width), static_cast<int>(png.height));
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const double a = buf[p * 4 + 3] / 255.0;
        for (int c = 0; c < 3; ++c) {
            const double v = buf[p * 4 + c] / 255.0;
            img.data[p * 3 + c] = a == 1.0 ? v : v * a + background[c] * (1.0 - a);
        }
    }
    return img;
}

void write_image(const std::filesystem::path& path, const Image& image) {
    if (image.width < 1 || image.height < 1) throw InvalidInput("write_image: empty image");
    std::vector<unsigned char> buf(image.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize_channel(image.data[i]);
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(image.width);
        png.height = static_cast<png_uint_32>(image.height);
        png.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&png, tmp.string().c_str(), 0, buf.data(), 0, nullptr)) {
            throw Error("cannot write PNG " + path.string() + ": " + png.message);
        }
    });
}

} // namespace gs4d
