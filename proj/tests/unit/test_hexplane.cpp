#include "gs4d/error.hpp"
#include "gs4d/hexplane.hpp"
#include "gs4d/mlp.hpp"

#include "gradcheck.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gs4d;

namespace {

FieldConfig small_config(int n = 8, int h = 4, std::vector<int> multires = {1, 2}) {
    FieldConfig c;
    c.resolution = {n, n, n, n};
    c.multires = std::move(multires);
    c.channels = h;
    c.hidden = 16;
    c.feature_width = 8;
    return c;
}

const Bounds kBounds{Vec3(-1.0, -0.5, -2.0), Vec3(1.0, 1.5, 0.5)};

HexPlaneField random_field(Rng& rng, const FieldConfig& cfg, double lo = 0.5, double hi = 1.5) {
    HexPlaneField f = HexPlaneField::create(cfg, kBounds, rng);
    for (auto& level : f.levels)
        for (auto& p : level)
            for (double& v : p.data) v = rng.uniform(lo, hi);
    return f;
}

Vec3 random_position(Rng& rng) {
    return Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 1.5), rng.uniform(-2.0, 0.5));
}

PlaneGrid random_plane(Rng& rng) {
    PlaneGrid p;
    p.rows = 2 + static_cast<int>(rng.index(12));
    p.cols = 2 + static_cast<int>(rng.index(12));
    p.channels = 1 + static_cast<int>(rng.index(5));
    p.data.resize(static_cast<std::size_t>(p.rows) * p.cols * p.channels);
    for (double& v : p.data) v = rng.uniform(-2, 2);
    return p;
}

std::vector<gradcheck::Tensor> field_tensors(HexPlaneField& f, FieldGrads& g) {
    std::vector<gradcheck::Tensor> out;
    for (std::size_t l = 0; l < f.levels.size(); ++l)
        for (int k = 0; k < 6; ++k)
            out.push_back({"plane" + std::to_string(l) + "." + std::to_string(k), f.levels[l][k].data,
                           g.planes[l][k]});
    auto ps = f.fusion.parameters();
    auto gs = g.fusion.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) out.push_back({"fusion" + std::to_string(i), ps[i], gs[i]});
    return out;
}

} // namespace

TEST_SUITE("hexplane") {

TEST_CASE("interpolation reproduces vertices and averages cell centres") {
    Rng rng(41);
    for (int it = 0; it < 50; ++it) {
        const PlaneGrid p = random_plane(rng);
        const int a = static_cast<int>(rng.index(p.rows)), b = static_cast<int>(rng.index(p.cols));
        const Eigen::VectorXd v = interp_plane(p, static_cast<double>(a) / (p.rows - 1),
                                               static_cast<double>(b) / (p.cols - 1));
        for (int c = 0; c < p.channels; ++c) CHECK(std::abs(v[c] - p.data[p.index(a, b) + c]) <= 1e-15);
        const int ca = static_cast<int>(rng.index(p.rows - 1)), cb = static_cast<int>(rng.index(p.cols - 1));
        const Eigen::VectorXd m = interp_plane(p, (ca + 0.5) / (p.rows - 1), (cb + 0.5) / (p.cols - 1));
        for (int c = 0; c < p.channels; ++c) {
            const double mean = 0.25 * (p.data[p.index(ca, cb) + c] + p.data[p.index(ca + 1, cb) + c] +
                                        p.data[p.index(ca, cb + 1) + c] + p.data[p.index(ca + 1, cb + 1) + c]);
            CHECK(std::abs(m[c] - mean) <= 1e-14);
        }
    }
}

TEST_CASE("interpolation matches the brute-force bilinear sum") {
    Rng rng(42);
    for (int it = 0; it < 1000; ++it) {
        const PlaneGrid p = random_plane(rng);
        // Include out-of-range queries, which clamp.
        const double u = rng.uniform(-0.1, 1.1), v = rng.uniform(-0.1, 1.1);
        const Eigen::VectorXd got = interp_plane(p, u, v);
        const auto ref = oracle::bilinear(p, u, v);
        for (int c = 0; c < p.channels; ++c) CHECK(std::abs(got[c] - ref[c]) <= 1e-14);
    }
}

TEST_CASE("all-ones planes give an all-ones fused feature") {
    Rng rng(43);
    const FieldConfig cfg = small_config(8, 4, {1, 2});
    HexPlaneField f = HexPlaneField::create(cfg, kBounds, rng);
    for (auto& level : f.levels)
        for (auto& p : level) std::fill(p.data.begin(), p.data.end(), 1.0);
    // Identity fusion: one square layer with unit weights and zero bias.
    const int w = f.fused_width();
    CHECK(w == 4 * 2);
    f.fusion.layers.assign(1, Linear{Eigen::MatrixXd::Identity(w, w), Eigen::VectorXd::Zero(w)});
    Eigen::VectorXd fh;
    const Eigen::VectorXd fd = encode(f, random_position(rng), rng.uniform(), &fh);
    CHECK((fh.array() - 1.0).abs().maxCoeff() <= 1e-15);
    CHECK((fd.array() - 1.0).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("a zero plane zeroes its level") {
    Rng rng(44);
    HexPlaneField f = random_field(rng, small_config());
    auto& p = f.levels[1][3].data;
    std::fill(p.begin(), p.end(), 0.0);
    Eigen::VectorXd fh;
    encode(f, random_position(rng), rng.uniform(), &fh);
    for (int c = 0; c < 4; ++c) {
        CHECK(fh[4 + c] == 0.0);
        CHECK(fh[c] != 0.0);
    }
}

TEST_CASE("encode matches the scalar reference") {
    Rng rng(45);
    HexPlaneField f = random_field(rng, small_config(8, 4, {1, 2}), 0.6, 1.4);
    HexPlaneField g = f;
    g.config.use_planes = false;
    g.levels.clear();
    g.fusion = Mlp::create({4, 16, 8}, rng);
    for (int it = 0; it < 1000; ++it) {
        // A tenth of queries fall outside the box.
        const Vec3 p = it % 10 == 0 ? Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3))
                                    : random_position(rng);
        const double t = rng.uniform();
        const Eigen::VectorXd got = encode(f, p, t);
        const auto ref = oracle::encode(f, p[0], p[1], p[2], t);
        REQUIRE(got.size() == static_cast<Eigen::Index>(ref.size()));
        for (std::size_t c = 0; c < ref.size(); ++c) CHECK(std::abs(got[c] - ref[c]) <= 1e-12);
        const Eigen::VectorXd got2 = encode(g, p, t);
        const auto ref2 = oracle::encode(g, p[0], p[1], p[2], t);
        for (std::size_t c = 0; c < ref2.size(); ++c) CHECK(std::abs(got2[c] - ref2[c]) <= 1e-12);
    }
}

TEST_CASE("batched encode equals per-query encode") {
    Rng rng(46);
    const HexPlaneField f = random_field(rng, small_config());
    std::vector<double> pos;
    for (int i = 0; i < 100; ++i) {
        const Vec3 p = random_position(rng);
        pos.insert(pos.end(), p.data(), p.data() + 3);
    }
    const EncodeCache c = encode_batch(f, pos, 0.3);
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd single = encode(f, Vec3(pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]), 0.3);
        CHECK(c.features.col(i) == single);
    }
}

TEST_CASE("encode is Lipschitz within a cell") {
    Rng rng(47);
    const HexPlaneField f = random_field(rng, small_config(8, 4, {1, 2}), 0.9, 1.1);
    // Fused features are products of six reads each bounded by 1.1, whose
    // slopes are bounded by range * (cells per unit) in normalised units.
    const double vmax = 1.1, range = 0.2, cells = 16;
    const Vec3 extent = kBounds.max - kBounds.min;
    const double lip = 6 * std::pow(vmax, 5) * range * cells * 2 / extent.minCoeff();
    for (int it = 0; it < 100; ++it) {
        const Vec3 p = random_position(rng);
        const double t = rng.uniform(0.05, 0.95);
        const Vec3 dir = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const double eps = 1e-7;
        Eigen::VectorXd a, b;
        encode(f, p, t, &a);
        encode(f, p + eps * dir, t, &b);
        CHECK((a - b).cwiseAbs().maxCoeff() <= lip * eps * 4);
    }
}

TEST_CASE("the first level of a multi-level field equals a single-level field") {
    Rng rng(48);
    const HexPlaneField f = random_field(rng, small_config(8, 4, {1, 2}));
    HexPlaneField one = f;
    one.config.multires = {1};
    one.levels.resize(1);
    one.fusion = Mlp::create({4, 16, 8}, rng);
    for (int it = 0; it < 100; ++it) {
        const Vec3 p = random_position(rng);
        const double t = rng.uniform();
        Eigen::VectorXd a, b;
        encode(f, p, t, &a);
        encode(one, p, t, &b);
        CHECK(a.head(4) == b);
    }
}

TEST_CASE("field validation") {
    Rng rng(49);
    HexPlaneField f = random_field(rng, small_config());
    CHECK_NOTHROW(f.validate());
    HexPlaneField bad = f;
    bad.bounds.max[1] = bad.bounds.min[1];
    CHECK_THROWS(bad.validate());
    bad = f;
    bad.levels[0][2].data.pop_back();
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    bad = f;
    bad.levels[1][0].data[3] = NAN;
    CHECK_THROWS(bad.validate());
    const Bounds b = Bounds::around(std::vector<double>{0, 0, 0, 1, 2, 3});
    CHECK((b.min - Vec3(-0.1, -0.2, -0.3)).norm() <= 1e-15);
    CHECK((b.max - Vec3(1.1, 2.2, 3.3)).norm() <= 1e-15);
}

TEST_CASE("zero upstream gradient and batch linearity") {
    Rng rng(50);
    const HexPlaneField f = random_field(rng, small_config());
    std::vector<double> pos;
    for (int i = 0; i < 64; ++i) {
        const Vec3 p = random_position(rng);
        pos.insert(pos.end(), p.data(), p.data() + 3);
    }
    const EncodeCache c = encode_batch(f, pos, 0.7);
    FieldGrads zero = FieldGrads::zeros_like(f);
    encode_backward(f, c, Eigen::MatrixXd::Zero(8, 64), zero);
    for (auto& level : zero.planes)
        for (auto& p : level)
            for (double v : p) CHECK(v == 0.0);

    Eigen::MatrixXd d(8, 64);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.uniform(-1, 1);
    FieldGrads batch = FieldGrads::zeros_like(f);
    std::vector<double> dpos(3 * 64, 0.0);
    encode_backward(f, c, d, batch, &dpos);
    FieldGrads sum = FieldGrads::zeros_like(f);
    for (int i = 0; i < 64; ++i) {
        const EncodeCache ci = encode_batch(f, std::span(pos).subspan(3 * i, 3), 0.7);
        FieldGrads gi = FieldGrads::zeros_like(f);
        std::vector<double> dp(3, 0.0);
        encode_backward(f, ci, d.col(i), gi, &dp);
        sum.add(gi);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(dp[k] - dpos[3 * i + k]) <= 1e-12 * (1 + std::abs(dp[k])));
    }
    for (std::size_t l = 0; l < f.levels.size(); ++l)
        for (int k = 0; k < 6; ++k)
            for (std::size_t j = 0; j < sum.planes[l][k].size(); ++j)
                CHECK(std::abs(sum.planes[l][k][j] - batch.planes[l][k][j]) <= 1e-12);
}

TEST_CASE("a single query touches at most four vertices per plane") {
    Rng rng(51);
    const HexPlaneField f = random_field(rng, small_config());
    for (int it = 0; it < 50; ++it) {
        const Vec3 p = random_position(rng);
        const EncodeCache c = encode_batch(f, std::vector<double>{p[0], p[1], p[2]}, rng.uniform());
        Eigen::MatrixXd d = Eigen::MatrixXd::Ones(8, 1);
        FieldGrads g = FieldGrads::zeros_like(f);
        encode_backward(f, c, d, g);
        std::size_t total = 0;
        for (std::size_t l = 0; l < f.levels.size(); ++l)
            for (int k = 0; k < 6; ++k) {
                const PlaneGrid& pl = f.levels[l][k];
                std::size_t touched = 0;
                for (std::size_t v = 0; v < static_cast<std::size_t>(pl.rows) * pl.cols; ++v) {
                    bool nz = false;
                    for (int ch = 0; ch < pl.channels; ++ch) nz |= g.planes[l][k][v * pl.channels + ch] != 0.0;
                    touched += nz;
                }
                CHECK(touched <= 4);
                CHECK(touched >= 1);
                total += touched;
            }
        CHECK(total <= 4 * 6 * f.levels.size());
    }
}

TEST_CASE("plane-vertex gradients of one query at one level") {
    Rng rng(52);
    for (int it = 0; it < 10; ++it) {
        HexPlaneField f = random_field(rng, small_config(6, 3, {1}));
        const Vec3 p = random_position(rng);
        const double t = rng.uniform();
        Eigen::MatrixXd w(8, 1);
        for (int k = 0; k < 8; ++k) w(k, 0) = rng.uniform(-1, 1);
        const EncodeCache c = encode_batch(f, std::vector<double>{p[0], p[1], p[2]}, t);
        FieldGrads g = FieldGrads::zeros_like(f);
        encode_backward(f, c, w, g);
        const auto loss = [&] { return w.col(0).dot(encode(f, p, t)); };
        std::vector<gradcheck::Tensor> planes;
        for (int k = 0; k < 6; ++k) planes.push_back({"plane" + std::to_string(k), f.levels[0][k].data, g.planes[0][k]});
        const auto r = gradcheck::check(planes, loss, nullptr, 1e-5);
        CHECK_MESSAGE(r.max_rel <= 1e-4, r.worst);
    }
}

TEST_CASE("full encoder gradient check") {
    Rng rng(53);
    gradcheck::Result total;
    for (int it = 0; it < 20; ++it) {
        HexPlaneField f = random_field(rng, small_config(8, 4, {1, 2}), 0.5, 1.5);
        const std::size_t n = 6;
        std::vector<double> pos;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 p = random_position(rng);
            pos.insert(pos.end(), p.data(), p.data() + 3);
        }
        std::vector<double> tv{rng.uniform(0.05, 0.95)};
        Eigen::MatrixXd w(8, n);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
        const EncodeCache c = encode_batch(f, pos, tv[0]);
        FieldGrads g = FieldGrads::zeros_like(f);
        std::vector<double> dpos(3 * n, 0.0), dt(n, 0.0);
        encode_backward(f, c, w, g, &dpos, &dt);
        std::vector<double> dts{0.0};
        for (double v : dt) dts[0] += v;
        const auto loss = [&] { return (w.array() * encode_batch(f, pos, tv[0]).features.array()).sum(); };
        const auto sig = [&] {
            const EncodeCache cc = encode_batch(f, pos, tv[0]);
            return encode_signature(f, cc) ^ relu_signature(cc.mlp, 7);
        };
        auto tensors = field_tensors(f, g);
        tensors.push_back({"positions", pos, dpos});
        tensors.push_back({"time", tv, dts});
        const auto r = gradcheck::check(tensors, loss, sig, 1e-5);
        CHECK_MESSAGE(r.max_rel <= 1e-3, r.worst);
        total.checked += r.checked;
        total.excluded += r.excluded;
    }
    CHECK(total.excluded_fraction() < 0.05);
}

TEST_CASE("total variation examples") {
    Rng rng(54);
    HexPlaneField f = HexPlaneField::create(small_config(2, 1, {1}), kBounds, rng);
    for (auto& p : f.levels[0]) std::fill(p.data.begin(), p.data.end(), 0.37);
    CHECK(tv_loss(f) == 0.0);
    // [[0, 1], [0, 1]] on every plane: row neighbours differ by 1, column neighbours by 0.
    for (auto& p : f.levels[0]) p.data = {0, 1, 0, 1};
    CHECK(tv_loss(f) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("total variation gradient") {
    Rng rng(55);
    for (int it = 0; it < 5; ++it) {
        HexPlaneField f = random_field(rng, small_config(4, 2, {1, 2}), -1, 1);
        FieldGrads g = FieldGrads::zeros_like(f);
        tv_loss_backward(f, 1.0, g);
        const auto r = gradcheck::check(field_tensors(f, g), [&] { return tv_loss(f); }, nullptr, 1e-5);
        CHECK_MESSAGE(r.max_rel <= 1e-5, r.worst);
    }
}

} // TEST_SUITE

TEST_SUITE("mlp") {

TEST_CASE("samples are computed independently of their batch position") {
    Rng rng(56);
    const Mlp m = Mlp::create({5, 7, 3}, rng);
    Eigen::MatrixXd x(5, 9);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const Eigen::MatrixXd y = m.forward(x);
    for (int c = 0; c < 9; ++c) {
        CHECK(m.forward(x.col(c)) == y.col(c));
        const auto ref = oracle::mlp_forward(m, std::vector<double>(x.col(c).data(), x.col(c).data() + 5));
        for (int r = 0; r < 3; ++r) CHECK(std::abs(ref[r] - y(r, c)) <= 1e-14);
    }
}

TEST_CASE("zero_last gives zero output") {
    Rng rng(57);
    const Mlp m = Mlp::create({4, 6, 2}, rng, true);
    CHECK(m.forward(Eigen::MatrixXd::Random(4, 3)) == Eigen::MatrixXd::Zero(2, 3));
    CHECK(m.parameter_count() == 4 * 6 + 6 + 6 * 2 + 2);
}

TEST_CASE("mlp gradients") {
    Rng rng(58);
    Mlp m = Mlp::create({4, 8, 8, 3}, rng);
    Eigen::MatrixXd x(4, 5), w(3, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    MlpCache cache;
    m.forward(x, &cache);
    Mlp g = m.zeros_like();
    const Eigen::MatrixXd dx = m.backward(cache, w, g);
    std::vector<gradcheck::Tensor> ts;
    auto ps = m.parameters();
    auto gs = g.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ts.push_back({"p" + std::to_string(i), ps[i], gs[i]});
    ts.push_back({"x", std::span(x.data(), x.size()), std::span<const double>(dx.data(), dx.size())});
    const auto loss = [&] { return (w.array() * m.forward(x).array()).sum(); };
    const auto sig = [&] {
        MlpCache c;
        m.forward(x, &c);
        return relu_signature(c);
    };
    const auto r = gradcheck::check(ts, loss, sig, 1e-5);
    CHECK_MESSAGE(r.max_rel <= 1e-6, r.worst);
}

TEST_CASE("chain validation") {
    Rng rng(59);
    Mlp m = Mlp::create({4, 8, 3}, rng);
    CHECK_NOTHROW(m.validate());
    m.layers[1].weight.resize(3, 7);
    CHECK_THROWS_AS(m.validate(), ShapeError);
}

} // TEST_SUITE
