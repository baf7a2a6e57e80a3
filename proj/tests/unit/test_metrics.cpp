#include "gs4d/error.hpp"
#include "gs4d/metrics.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gs4d;

namespace {

Image random_image(Rng& rng, int w, int h) {
    Image img(w, h);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr examples") {
    Rng rng(111);
    const Image a = random_image(rng, 20, 14);
    CHECK(psnr(a, a) == kPsnrCap);
    CHECK(psnr(Image(8, 8, 0.0), Image(8, 8, 0.5)) == doctest::Approx(6.020599913279624).epsilon(1e-14));
    CHECK_THROWS_AS(psnr(a, Image(14, 20)), ShapeError);
}

TEST_CASE("psnr matches a scalar recomputation") {
    Rng rng(112);
    for (int it = 0; it < 20; ++it) {
        const Image a = random_image(rng, 16, 9), b = random_image(rng, 16, 9);
        double se = 0.0;
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c) se += (a.at(x, y, c) - b.at(x, y, c)) * (a.at(x, y, c) - b.at(x, y, c));
        const double ref = 10.0 * std::log10(1.0 / (se / (16 * 9 * 3)));
        CHECK(std::abs(psnr(a, b) - ref) <= 1e-9);
    }
}

TEST_CASE("ssim examples") {
    Rng rng(113);
    const Image a = random_image(rng, 24, 20);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const Image g(16, 16, 0.5);
    Image neg(16, 16);
    for (std::size_t i = 0; i < g.data.size(); ++i) neg.data[i] = 1.0 - g.data[i];
    CHECK(ssim(g, neg) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(Image(10, 20), Image(10, 20)), InvalidInput);
    CHECK_THROWS_AS(ssim(a, Image(20, 24)), ShapeError);
}

TEST_CASE("ssim matches direct convolution") {
    Rng rng(114);
    for (int it = 0; it < 5; ++it) {
        const Image a = random_image(rng, 23, 19);
        Image b = a;
        for (double& v : b.data) v = std::clamp(v + 0.2 * rng.normal(), 0.0, 1.0);
        const double s = ssim(a, b);
        CHECK(std::abs(s - oracle::ssim(a, b)) <= 1e-6);
        CHECK(s < 1.0);
        CHECK(s > -1.0);
    }
}

} // TEST_SUITE
