#include "gs4d/adam.hpp"
#include "gs4d/config.hpp"
#include "gs4d/error.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/trainer.hpp"

#include "oracles.hpp"
#include "scenes.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace gs4d;

namespace {

TrainConfig toy_config() {
    TrainConfig c;
    c.sh_degree = 0;
    c.warmup_iters = 0;
    c.total_iters = 200;
    c.densify_from_iter = 1000000;
    c.densify_stop_iter = 1000000;
    c.prune_interval = 1000000;
    c.field.resolution = {8, 8, 8, 8};
    c.field.multires = {1, 2};
    c.field.channels = 4;
    c.field.hidden = 16;
    c.field.feature_width = 16;
    c.deform.width = 16;
    return c;
}

/// Eight Gaussians, two of them moving, seen from six orbit views at four times.
std::vector<Frame> toy_frames(Rng& rng, GaussianSet* truth_out = nullptr) {
    GaussianSet truth = scenes::random_set(rng, 8, 0, 0.15, 0.3);
    for (std::size_t i = 0; i < 8; ++i) truth.opacities[i] = 2.0;
    std::vector<Frame> frames;
    for (int v = 0; v < 6; ++v) {
        for (int k = 0; k < 4; ++k) {
            const double t = k / 3.0;
            GaussianSet moved = truth;
            moved.positions[0] += 0.2 * std::sin(6.283185307179586 * t);
            moved.positions[4] += 0.15 * t;
            Frame f;
            const double az = 1.047 * v;
            f.camera = Camera::look_at(Vec3(4 * std::cos(az), 4 * std::sin(az), 1.0), Vec3::Zero(), Vec3::UnitZ(),
                                       40, 40, 32, 32);
            f.time = t;
            f.image = render(f.camera, moved, Vec3::Ones()).rgb;
            frames.push_back(std::move(f));
        }
    }
    if (truth_out) *truth_out = truth;
    return frames;
}

Model toy_model(const TrainConfig& c, Rng& rng, const GaussianSet& truth) {
    std::vector<double> pts = truth.positions;
    for (double& p : pts) p += 0.05 * rng.normal();
    std::vector<double> colors(pts.size(), 0.5);
    const GaussianSet init = init_gaussians(pts, colors, 0, Bounds{}, 0, rng);
    return create_model(c, init, Bounds{}, rng);
}

double mean_loss(const Model& m, const std::vector<Frame>& frames) {
    double s = 0.0;
    for (const Frame& f : frames) s += frame_loss(m, f, Vec3::Ones(), true);
    return s / frames.size();
}

std::vector<double> run(const TrainConfig& c, std::size_t steps, std::uint64_t seed, Model* out = nullptr) {
    Rng rng(seed);
    GaussianSet truth;
    const std::vector<Frame> frames = toy_frames(rng, &truth);
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, scene_extent(frames));
    std::vector<double> trace;
    for (std::size_t i = 0; i < steps; ++i) trace.push_back(train_step(m, s, frames, c).loss);
    if (out) *out = m;
    return trace;
}

struct DensifyFixture {
    TrainConfig config;
    Model model;
    TrainState state;
    explicit DensifyFixture(std::size_t n, double log_scale = std::log(0.001)) {
        config = toy_config();
        Rng rng(5);
        GaussianSet s = scenes::random_set(rng, n, 0);
        for (std::size_t i = 0; i < 3 * n; ++i) s.scales[i] = log_scale;
        model = create_model(config, s, Bounds{}, rng);
        state = init_state(config, model, 2.0);
        state.grad_count.assign(n, 1);
        state.grad_accum.assign(n, 0.5 * config.grad_threshold);
        for (AdamMoments& m : state.moments)
            for (std::size_t k = 0; k < m.size(); ++k) m.m[k] = m.v[k] = 1.0 + k;
    }
};

void reseed(TrainState& s) { s.rng = Rng(99); }

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("loss examples") {
    Rng rng(81);
    HexPlaneField f = HexPlaneField::create(toy_config().field, Bounds{}, rng);
    for (auto& level : f.levels)
        for (auto& p : level) std::fill(p.data.begin(), p.data.end(), 1.0);
    Image a(8, 6);
    for (double& v : a.data) v = rng.uniform();
    CHECK(total_loss(a, a, f, 0.5) == 0.0);
    CHECK(total_loss(Image(8, 6, 1.0), Image(8, 6, 0.0), f, 0.0) == 1.0);
    Image b(8, 6);
    for (double& v : b.data) v = rng.uniform();
    double ref = 0.0;
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) ref += std::abs(a.at(x, y, c) - b.at(x, y, c));
    ref /= 8 * 6 * 3;
    CHECK(std::abs(l1_loss(a, b) - ref) <= 1e-12);
    for (auto& level : f.levels)
        for (auto& p : level)
            for (double& v : p.data) v = rng.uniform();
    CHECK(std::abs(total_loss(a, b, f, 0.3) - (ref + 0.3 * tv_loss(f))) <= 1e-12);
    CHECK_THROWS_AS(l1_loss(a, Image(6, 8)), ShapeError);
}

TEST_CASE("adam with zero gradients decays the moments only") {
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
    AdamMoments m(2);
    m.m = {0.5, -0.5};
    m.v = {0.25, 0.25};
    m.step = 3;
    // Bias-corrected moments are non-zero here, so only check the decay.
    REQUIRE(adam_step(p, g, m, 0.0));
    CHECK(p == std::vector<double>{1.0, -2.0});
    CHECK(m.m[0] == doctest::Approx(0.45).epsilon(1e-15));
    CHECK(m.v[0] == doctest::Approx(0.24975).epsilon(1e-15));
    std::vector<double> q{3.0};
    AdamMoments z(1);
    REQUIRE(adam_step(q, std::vector<double>{0.0}, z, 0.1));
    CHECK(q[0] == 3.0);
}

TEST_CASE("first adam step moves by about the learning rate") {
    for (double g : {1e-3, 0.5, 40.0}) {
        std::vector<double> p{0.0};
        AdamMoments m(1);
        adam_step(p, std::vector<double>{g}, m, 0.01);
        CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-4));
    }
}

TEST_CASE("adam matches the scalar reference over 100 steps") {
    Rng rng(82);
    const std::size_t n = 7;
    std::vector<double> p(n), q;
    for (double& v : p) v = rng.normal();
    q = p;
    std::vector<oracle::ScalarAdam> ref(n);
    AdamMoments m(n);
    for (int it = 0; it < 100; ++it) {
        std::vector<double> g(n);
        for (double& v : g) v = rng.normal() * std::exp(rng.uniform(-5, 2));
        const double lr = rng.uniform(1e-4, 1e-1);
        adam_step(p, g, m, lr);
        for (std::size_t i = 0; i < n; ++i) q[i] = ref[i].step(q[i], g[i], lr);
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    CHECK(m.step == 100);
}

TEST_CASE("adam skips non-finite gradients") {
    std::vector<double> p{1.0, 2.0};
    AdamMoments m(2);
    const AdamMoments before = m;
    CHECK_FALSE(adam_step(p, std::vector<double>{0.1, std::numeric_limits<double>::quiet_NaN()}, m, 0.1));
    CHECK(p == std::vector<double>{1.0, 2.0});
    CHECK(m == before);
    CHECK_THROWS_AS(adam_step(p, std::vector<double>{0.1}, m, 0.1), ShapeError);
}

TEST_CASE("learning-rate schedule decays in log space") {
    const LrSchedule s{1.6e-3, 1.6e-4};
    CHECK(s.at(0, 100) == doctest::Approx(1.6e-3).epsilon(1e-14));
    CHECK(s.at(100, 100) == doctest::Approx(1.6e-4).epsilon(1e-14));
    CHECK(s.at(50, 100) == doctest::Approx(std::sqrt(1.6e-3 * 1.6e-4)).epsilon(1e-14));
    CHECK(s.at(500, 100) == doctest::Approx(1.6e-4).epsilon(1e-14));
}

TEST_CASE("phases follow the warm-up length") {
    TrainConfig c;
    c.warmup_iters = 10;
    CHECK(phase_at(c, 0) == Phase::Warmup);
    CHECK(phase_at(c, 9) == Phase::Warmup);
    CHECK(phase_at(c, 10) == Phase::Joint);
}

TEST_CASE("zero learning rates leave parameters unchanged") {
    TrainConfig c = toy_config();
    Rng rng(83);
    GaussianSet truth;
    const auto frames = toy_frames(rng, &truth);
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, scene_extent(frames));
    TrainConfig zero = c;
    for (LrSchedule* l : {&zero.lr.position, &zero.lr.plane, &zero.lr.mlp, &zero.lr.sh_dc, &zero.lr.sh_rest,
                          &zero.lr.opacity, &zero.lr.scale, &zero.lr.rotation})
        *l = LrSchedule{0.0, 0.0};
    const Model before = m;
    for (int i = 0; i < 3; ++i) CHECK(std::isfinite(train_step(m, s, frames, zero).loss));
    CHECK(m == before);
    TrainConfig bad = c;
    bad.lr.position.init = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("an empty dataset is rejected") {
    TrainConfig c = toy_config();
    Rng rng(84);
    GaussianSet truth;
    toy_frames(rng, &truth);
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, 1.0);
    CHECK_THROWS_AS(train_step(m, s, std::vector<Frame>{}, c), InvalidInput);
}

TEST_CASE("equal seeds give identical loss traces across thread counts") {
    const TrainConfig c = toy_config();
    set_num_threads(1);
    Model a, b;
    const auto t1 = run(c, 25, 7, &a);
    set_num_threads(4);
    const auto t2 = run(c, 25, 7, &b);
    set_num_threads(0);
    CHECK(t1 == t2);
    CHECK(a == b);
    CHECK(run(c, 25, 8) != t1);
}

TEST_CASE("loss on the toy scene halves within 200 joint steps") {
    const TrainConfig c = toy_config();
    Rng rng(85);
    GaussianSet truth;
    const auto frames = toy_frames(rng, &truth);
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, scene_extent(frames));
    const double start = mean_loss(m, frames);
    for (int i = 0; i < 200; ++i) {
        const StepResult r = train_step(m, s, frames, c);
        CHECK(std::isfinite(r.loss));
        CHECK(r.phase == Phase::Joint);
    }
    const double end = mean_loss(m, frames);
    MESSAGE("toy loss " << start << " -> " << end);
    CHECK(end <= 0.5 * start);
}

TEST_CASE("warm-up freezes the field and the decoder") {
    TrainConfig c = toy_config();
    c.warmup_iters = 5;
    Rng rng(86);
    GaussianSet truth;
    const auto frames = toy_frames(rng, &truth);
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, scene_extent(frames));
    for (int i = 0; i < 5; ++i) {
        const HexPlaneField f = m.field;
        const DeformNet n = m.net;
        const GaussianSet g = m.gaussians;
        CHECK(train_step(m, s, frames, c).phase == Phase::Warmup);
        CHECK(m.field == f);
        CHECK(m.net == n);
        CHECK(m.gaussians != g);
    }
    const HexPlaneField f = m.field;
    CHECK(train_step(m, s, frames, c).phase == Phase::Joint);
    CHECK(m.field != f);
}

TEST_CASE("non-finite gradients skip the step") {
    TrainConfig c = toy_config();
    Rng rng(87);
    GaussianSet truth;
    auto frames = toy_frames(rng, &truth);
    for (Frame& f : frames) f.image.data[5] = std::numeric_limits<double>::quiet_NaN();
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, scene_extent(frames));
    const Model before = m;
    const StepResult r = train_step(m, s, frames, c);
    CHECK(r.skipped);
    CHECK(m == before);
    CHECK(s.diagnostics.skipped_steps == 1);
    CHECK(s.iter == 1);
}

TEST_CASE("densification leaves quiet Gaussians alone") {
    DensifyFixture fx(6);
    const Model before = fx.model;
    const DensifyReport r = densify_and_prune(fx.model, fx.state, fx.config, true);
    CHECK(r.cloned + r.split + r.pruned == 0);
    CHECK(fx.model == before);
}

TEST_CASE("a small Gaussian with a large gradient is cloned") {
    DensifyFixture fx(6);
    fx.state.grad_accum[2] = 3 * fx.config.grad_threshold;
    const GaussianSet before = fx.model.gaussians;
    const auto m0 = fx.state.moments[0];
    const DensifyReport r = densify_and_prune(fx.model, fx.state, fx.config, true);
    CHECK(r.cloned == 1);
    CHECK(r.split == 0);
    REQUIRE(fx.model.gaussians.size() == 7);
    CHECK(fx.model.gaussians.scale(6) == before.scale(2));
    CHECK(fx.model.gaussians.position(6) != before.position(2));
    CHECK((fx.model.gaussians.position(6) - before.position(2)).norm() < 0.05);
    // Existing rows keep their moments, the clone starts from zero.
    for (int k = 0; k < 18; ++k) CHECK(fx.state.moments[0].m[k] == m0.m[k]);
    for (int k = 18; k < 21; ++k) CHECK(fx.state.moments[0].m[k] == 0.0);
    CHECK_NOTHROW(check_alignment(fx.model, fx.state));
    CHECK(fx.state.grad_accum == std::vector<double>(7, 0.0));
}

TEST_CASE("a large Gaussian with a large gradient is split in two") {
    DensifyFixture fx(4, std::log(0.5));
    fx.state.grad_accum[1] = 3 * fx.config.grad_threshold;
    const GaussianSet before = fx.model.gaussians;
    const DensifyReport r = densify_and_prune(fx.model, fx.state, fx.config, true);
    CHECK(r.split == 1);
    REQUIRE(fx.model.gaussians.size() == 5);
    for (std::size_t c : {3u, 4u})
        for (int k = 0; k < 3; ++k)
            CHECK(fx.model.gaussians.scale(c)[k] == doctest::Approx(std::log(0.5 / 1.6)).epsilon(1e-14));
    CHECK(fx.model.gaussians.position(0) == before.position(0));
    CHECK(fx.model.gaussians.position(1) == before.position(2));
    CHECK_NOTHROW(check_alignment(fx.model, fx.state));
}

TEST_CASE("growth respects the Gaussian budget") {
    DensifyFixture fx(6);
    fx.config.max_gaussians = 8;
    for (double& a : fx.state.grad_accum) a = 5 * fx.config.grad_threshold;
    densify_and_prune(fx.model, fx.state, fx.config, true);
    CHECK(fx.model.gaussians.size() == 8);
}

TEST_CASE("pruning a transparent Gaussian barely changes the render") {
    DensifyFixture fx(6, std::log(0.2));
    fx.model.gaussians.opacities[3] = -20.0;
    const Camera cam = Camera::look_at(Vec3(0, -4, 0.5), Vec3::Zero(), Vec3::UnitZ(), 40, 40, 32, 32);
    const Image before = render_model(fx.model, cam, 0.5, Vec3::Ones()).rgb;
    const DensifyReport r = densify_and_prune(fx.model, fx.state, fx.config, false);
    CHECK(r.pruned == 1);
    CHECK(fx.model.gaussians.size() == 5);
    const Image after = render_model(fx.model, cam, 0.5, Vec3::Ones()).rgb;
    double mad = 0.0;
    for (std::size_t i = 0; i < after.data.size(); ++i) mad += std::abs(after.data[i] - before.data[i]);
    CHECK(mad / after.data.size() <= 1e-6);
    CHECK_NOTHROW(check_alignment(fx.model, fx.state));
}

TEST_CASE("misaligned moments are detected") {
    DensifyFixture fx(3);
    fx.state.moments[2].m.pop_back();
    CHECK_THROWS_AS(check_alignment(fx.model, fx.state), ShapeError);
}

TEST_CASE("count never grows after densification stops") {
    TrainConfig c = toy_config();
    c.total_iters = 120;
    c.densify_from_iter = 10;
    c.densify_interval = 10;
    c.densify_stop_iter = 60;
    c.prune_interval = 20;
    c.grad_threshold = 1e-6;
    c.opacity_prune_threshold = 0.05;
    Rng rng(88);
    GaussianSet truth;
    const auto frames = toy_frames(rng, &truth);
    Model m = toy_model(c, rng, truth);
    TrainState s = init_state(c, m, scene_extent(frames));
    std::size_t peak = 0, prev = m.gaussians.size();
    for (std::uint64_t i = 0; i < c.total_iters; ++i) {
        train_step(m, s, frames, c);
        CHECK_NOTHROW(check_alignment(m, s));
        const std::size_t now = m.gaussians.size();
        if (s.iter >= c.densify_stop_iter) CHECK(now <= prev);
        peak = std::max(peak, now);
        prev = now;
    }
    CHECK(peak > 8);
    CHECK(s.diagnostics.densify_events == 5);
}

TEST_CASE("initialisation from a single point") {
    Rng rng(89);
    const GaussianSet g = init_gaussians(std::vector<double>{0, 0, 0}, {}, 1, Bounds{}, 0, rng);
    REQUIRE(g.size() == 1);
    CHECK(g.position(0) == Vec3::Zero());
    CHECK(g.rotation(0) == Vec4(1, 0, 0, 0));
    CHECK(sigmoid(g.opacities[0]) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(std::isfinite(g.scales[0]));
    CHECK(g.sh_rest == std::vector<double>(9, 0.0));
    CHECK_THROWS_AS(init_gaussians(std::vector<double>{}, {}, 1, Bounds{}, 0, rng), InvalidInput);
}

TEST_CASE("initial scales follow the 3-nearest-neighbour distance") {
    Rng rng(90);
    std::vector<double> pts;
    const double d = 0.17;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 3; ++k) pts.insert(pts.end(), {d * i, d * j + 0.01 * rng.normal(), d * k});
    const std::size_t n = pts.size() / 3;
    const GaussianSet g = init_gaussians(pts, {}, 0, Bounds{}, 0, rng);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> dist;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0;
            for (int c = 0; c < 3; ++c) s += (pts[3 * i + c] - pts[3 * j + c]) * (pts[3 * i + c] - pts[3 * j + c]);
            dist.push_back(std::sqrt(s));
        }
        std::sort(dist.begin(), dist.end());
        const double ref = (dist[0] + dist[1] + dist[2]) / 3;
        for (int c = 0; c < 3; ++c) CHECK(std::exp(g.scales[3 * i + c]) == doctest::Approx(ref).epsilon(1e-12));
        CHECK(std::exp(g.scales[3 * i]) == doctest::Approx(d).epsilon(0.2));
    }
}

TEST_CASE("colours set the DC coefficient and random init is reproducible") {
    Rng rng(91);
    const GaussianSet g = init_gaussians(std::vector<double>{0, 0, 0, 1, 0, 0}, std::vector<double>{1, 0.5, 0, 0, 0, 1},
                                         0, Bounds{}, 0, rng);
    const double y0 = 0.28209479177387814;
    CHECK(g.sh_dc[0] * y0 + 0.5 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g.sh_dc[1] * y0 + 0.5 == doctest::Approx(0.5).epsilon(1e-14));
    Rng r1(3), r2(3);
    const Bounds b{Vec3(-2, -1, 0), Vec3(2, 1, 3)};
    const GaussianSet a = init_gaussians({}, {}, 1, b, 50, r1);
    const GaussianSet c = init_gaussians({}, {}, 1, b, 50, r2);
    CHECK(a == c);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK((a.position(i).array() >= b.min.array()).all());
        CHECK((a.position(i).array() <= b.max.array()).all());
    }
}

TEST_CASE("scene extent of cameras") {
    std::vector<Frame> frames(2);
    frames[0].camera.translation = Vec3(1, 0, 0);
    frames[1].camera.translation = Vec3(-1, 0, 0);
    CHECK(scene_extent(frames) == doctest::Approx(1.1).epsilon(1e-15));
}

} // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("settings round trip through text") {
    TrainConfig c;
    apply_setting(c, "seed", "42");
    apply_setting(c, "lr.plane.init", "0.003");
    apply_setting(c, "field.resolution", "16,16,16,8");
    apply_setting(c, "field.multires", "1,2,4");
    apply_setting(c, "deform.color", "true");
    apply_setting(c, "background", "0,0.25,1");
    apply_setting(c, "tv_weight", "0.1234567890123");
    TrainConfig d;
    apply_config_text(d, to_config_text(c));
    CHECK(d == c);
    CHECK(d.field.resolution == std::array<int, 4>{16, 16, 16, 8});
    CHECK(d.lr.plane.init == 0.003);
}

TEST_CASE("malformed settings are rejected") {
    TrainConfig c;
    CHECK_THROWS_AS(apply_setting(c, "no_such_key", "1"), InvalidInput);
    CHECK_THROWS_AS(apply_setting(c, "seed", "abc"), InvalidInput);
    CHECK_THROWS_AS(parse_key_values("seed = 1\nthis line is wrong\n"), ParseError);
    const auto kv = parse_key_values("# comment\nseed = 3  # trailing\n\nwarmup_iters=5\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"seed", "3"});
    TrainConfig w;
    w.warmup_iters = 10;
    w.total_iters = 5;
    CHECK_THROWS_AS(w.validate(), InvalidInput);
}

} // TEST_SUITE
