#include "gs4d/trainer.hpp"

#include "gs4d/error.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/sh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gs4d {

void Model::validate() const {
    gaussians.validate();
    field.validate();
    net.validate(field.feature_width());
    if (net.enabled(Head::Color) && net.sh_degree != gaussians.sh_degree) {
        throw ShapeError("model: colour head SH degree does not match the Gaussians");
    }
}

GaussianSet model_at(const Model& model, double t, bool deformed) {
    if (!deformed) return model.gaussians;
    return deform(model.gaussians, model.field, model.net, t);
}

RenderedImage render_model(const Model& model, const Camera& camera, double t,
                           const Vec3& background, bool deformed) {
    return render(camera, model_at(model, t, deformed), background);
}

Phase phase_at(const TrainConfig& config, std::uint64_t iter) {
    return iter < config.warmup_iters ? Phase::Warmup : Phase::Joint;
}

namespace {

void push_mlp(std::vector<TensorRef>& out, Mlp& mlp) {
    for (auto s : mlp.parameters()) out.push_back({s, Group::Mlp, 0});
}

void push_mlp(std::vector<std::span<double>>& out, Mlp& mlp) {
    for (auto s : mlp.parameters()) out.push_back(s);
}

const LrSchedule& schedule(const LrTable& lr, Group g) {
    switch (g) {
    case Group::Position: return lr.position;
    case Group::Rotation: return lr.rotation;
    case Group::Scale: return lr.scale;
    case Group::Opacity: return lr.opacity;
    case Group::ShDc: return lr.sh_dc;
    case Group::ShRest: return lr.sh_rest;
    case Group::Plane: return lr.plane;
    case Group::Mlp: return lr.mlp;
    }
    return lr.mlp;
}

constexpr std::size_t kGaussianTensors = 6;

} // namespace

std::vector<TensorRef> model_tensors(Model& model) {
    GaussianSet& g = model.gaussians;
    std::vector<TensorRef> out{
        {g.positions, Group::Position, 3}, {g.rotations, Group::Rotation, 4},
        {g.scales, Group::Scale, 3},       {g.opacities, Group::Opacity, 1},
        {g.sh_dc, Group::ShDc, 3},         {g.sh_rest, Group::ShRest, g.rest_stride()}};
    for (auto& level : model.field.levels) {
        for (PlaneGrid& p : level) out.push_back({p.data, Group::Plane, 0});
    }
    push_mlp(out, model.field.fusion);
    for (Mlp& h : model.net.heads) push_mlp(out, h);
    return out;
}

ModelGrads ModelGrads::zeros_like(const Model& model) {
    return {GaussianGrads::zeros_like(model.gaussians), FieldGrads::zeros_like(model.field),
            model.net.zeros_like()};
}

std::vector<std::span<double>> ModelGrads::tensors() {
    std::vector<std::span<double>> out{gaussians.positions, gaussians.rotations, gaussians.scales,
                                       gaussians.opacities, gaussians.sh_dc,     gaussians.sh_rest};
    for (auto& level : field.planes) {
        for (auto& p : level) out.push_back(p);
    }
    push_mlp(out, field.fusion);
    for (Mlp& h : net.heads) push_mlp(out, h);
    return out;
}

double scene_extent(std::span<const Frame> frames) {
    if (frames.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const Frame& f : frames) mean += f.camera.center();
    mean /= static_cast<double>(frames.size());
    double r = 0.0;
    for (const Frame& f : frames) r = std::max(r, (f.camera.center() - mean).norm());
    return r > 0.0 ? 1.1 * r : 1.0;
}

TrainState init_state(const TrainConfig& config, Model& model, double extent) {
    config.validate();
    model.validate();
    if (!(extent > 0.0) || !std::isfinite(extent)) throw InvalidInput("scene extent must be positive");
    TrainState s;
    for (const TensorRef& t : model_tensors(model)) s.moments.emplace_back(t.data.size());
    s.grad_accum.assign(model.gaussians.size(), 0.0);
    s.grad_count.assign(model.gaussians.size(), 0);
    s.rng = Rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
    s.scene_extent = extent;
    return s;
}

Model create_model(const TrainConfig& config, const GaussianSet& gaussians, const Bounds& bounds,
                   Rng& rng) {
    config.validate();
    if (gaussians.sh_degree != config.sh_degree) {
        throw ShapeError("create_model: Gaussian SH degree does not match the config");
    }
    Model m;
    m.gaussians = gaussians;
    m.field = HexPlaneField::create(config.field, bounds, rng);
    m.net = DeformNet::create(config.deform, m.field.feature_width(), config.sh_degree, rng);
    m.validate();
    return m;
}

GaussianSet init_gaussians(std::span<const double> points, std::span<const double> colors,
                           int sh_degree, const Bounds& bounds, std::size_t random_count, Rng& rng) {
    if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidInput("sh_degree must be in [0, 3]");
    if (points.size() % 3 != 0) throw ShapeError("init_gaussians: points must be [N][3]");
    if (!colors.empty() && colors.size() != points.size()) {
        throw ShapeError("init_gaussians: colours must match points");
    }
    std::vector<double> pos(points.begin(), points.end());
    std::vector<double> col(colors.begin(), colors.end());
    if (pos.empty()) {
        if (random_count == 0) throw InvalidInput("init_gaussians: need at least one point");
        pos.resize(3 * random_count);
        col.resize(3 * random_count);
        for (std::size_t i = 0; i < random_count; ++i) {
            for (int k = 0; k < 3; ++k) pos[3 * i + k] = rng.uniform(bounds.min[k], bounds.max[k]);
            for (int k = 0; k < 3; ++k) col[3 * i + k] = rng.uniform();
        }
    }
    if (!all_finite(pos.data(), pos.size())) throw InvalidInput("init_gaussians: non-finite point");
    const std::size_t n = pos.size() / 3;

    GaussianSet set;
    set.sh_degree = sh_degree;
    set.resize(n);
    set.positions = pos;

    // Mean distance to the three nearest neighbours.
    std::vector<double> dist(n, 0.0);
    const double fallback = 0.01 * (bounds.max - bounds.min).mean();
    parallel_for(
        n,
        [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                std::array<double, 3> best{std::numeric_limits<double>::infinity(),
                                           std::numeric_limits<double>::infinity(),
                                           std::numeric_limits<double>::infinity()};
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    double d2 = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        const double d = pos[3 * i + k] - pos[3 * j + k];
                        d2 += d * d;
                    }
                    if (d2 < best[2]) {
                        best[2] = d2;
                        if (best[2] < best[1]) std::swap(best[1], best[2]);
                        if (best[1] < best[0]) std::swap(best[0], best[1]);
                    }
                }
                double sum = 0.0;
                int used = 0;
                for (double d2 : best) {
                    if (std::isfinite(d2)) {
                        sum += std::sqrt(d2);
                        ++used;
                    }
                }
                dist[i] = used ? std::max(sum / used, 1e-7) : fallback;
            }
        },
        16);

    const double c0 = sh_basis(Vec3::UnitZ(), 0)[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double ls = std::log(dist[i]);
        for (int k = 0; k < 3; ++k) set.scales[3 * i + k] = ls;
        set.rotations[4 * i] = 1.0;
        set.opacities[i] = logit(0.1);
        for (int k = 0; k < 3; ++k) {
            const double c = col.empty() ? 0.5 : col[3 * i + k];
            set.sh_dc[3 * i + k] = (c - 0.5) / c0;
        }
    }
    return set;
}

TrainingStart start_training(const TrainConfig& config, std::span<const Frame> train,
                             const PointCloud* points, const Bounds& bounds) {
    config.validate();
    if (train.empty()) throw InvalidInput("start_training: no training frames");
    Rng rng(config.seed);
    const GaussianSet g =
        points ? init_gaussians(points->positions, points->colors, config.sh_degree, bounds, 0, rng)
               : init_gaussians({}, {}, config.sh_degree, bounds, config.init_random_count, rng);
    TrainingStart out;
    out.model = create_model(config, g, bounds, rng);
    out.state = init_state(config, out.model, scene_extent(train));
    return out;
}

double l1_loss(const Image& rendered, const Image& target) {
    if (rendered.width != target.width || rendered.height != target.height ||
        rendered.data.size() != target.data.size()) {
        throw ShapeError("l1_loss: image sizes differ");
    }
    if (rendered.data.empty()) throw ShapeError("l1_loss: empty image");
    double s = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) s += std::abs(rendered.data[i] - target.data[i]);
    return s / static_cast<double>(rendered.data.size());
}

Image l1_loss_backward(const Image& rendered, const Image& target) {
    if (rendered.data.size() != target.data.size() || rendered.width != target.width) {
        throw ShapeError("l1_loss_backward: image sizes differ");
    }
    Image d(rendered.width, rendered.height);
    const double s = 1.0 / static_cast<double>(rendered.data.size());
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        const double diff = rendered.data[i] - target.data[i];
        d.data[i] = diff > 0.0 ? s : (diff < 0.0 ? -s : 0.0);
    }
    return d;
}

double total_loss(const Image& rendered, const Image& target, const HexPlaneField& field,
                  double tv_weight) {
    return l1_loss(rendered, target) + tv_weight * tv_loss(field);
}

double frame_loss(const Model& model, const Frame& frame, const Vec3& background, bool deformed) {
    return l1_loss(render_model(model, frame.camera, frame.time, background, deformed).rgb, frame.image);
}

FrameBackward frame_loss_backward(const Model& model, const Frame& frame, const Vec3& background,
                                  bool deformed, double weight, ModelGrads& grads) {
    FrameBackward out;
    DeformCache cache;
    GaussianSet moved;
    if (deformed) {
        moved = deform(model.gaussians, model.field, model.net, frame.time, &cache);
        out.quat_violations = cache.quat_violations;
    }
    const GaussianSet& set = deformed ? moved : model.gaussians;
    const RenderedImage img = render(frame.camera, set, background);
    out.l1 = l1_loss(img.rgb, frame.image);
    Image d_img = l1_loss_backward(img.rgb, frame.image);
    for (double& v : d_img.data) v *= weight;
    RenderGrads rg = render_backward(frame.camera, set, background, d_img);
    if (deformed) {
        deform_backward(model.gaussians, model.field, model.net, cache, rg.params, grads.gaussians,
                        grads.field, grads.net);
    } else {
        grads.gaussians.add(rg.params);
    }
    out.mean2d = std::move(rg.mean2d);
    out.visible = std::move(rg.visible);
    return out;
}

StepResult train_step(Model& model, TrainState& state, std::span<const Frame> frames,
                      const TrainConfig& config) {
    if (frames.empty()) throw InvalidInput("train_step: empty dataset");
    StepResult result;
    result.iter = state.iter;
    result.phase = phase_at(config, state.iter);
    const bool joint = result.phase == Phase::Joint;
    const std::size_t n = model.gaussians.size();
    if (state.grad_accum.size() != n) throw ShapeError("train_step: stale densification statistics");

    ModelGrads grads = ModelGrads::zeros_like(model);
    std::vector<double> view_norm(n, 0.0);
    std::vector<std::uint64_t> view_count(n, 0);
    const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
    double l1_sum = 0.0;
    std::uint64_t violations = 0;

    for (std::uint64_t b = 0; b < config.batch_size; ++b) {
        const Frame& frame = frames[state.rng.index(frames.size())];
        const FrameBackward fb =
            frame_loss_backward(model, frame, config.background, joint, inv_batch, grads);
        l1_sum += fb.l1;
        violations += fb.quat_violations;
        // Screen-space gradient in NDC units, per view.
        const double sx = 0.5 * frame.camera.width, sy = 0.5 * frame.camera.height;
        const double scale = static_cast<double>(config.batch_size);
        for (std::size_t i = 0; i < n; ++i) {
            if (!fb.visible[i]) continue;
            view_norm[i] += scale * std::hypot(fb.mean2d[2 * i] * sx, fb.mean2d[2 * i + 1] * sy);
            ++view_count[i];
        }
    }

    result.l1 = l1_sum * inv_batch;
    result.tv = tv_loss(model.field);
    result.loss = result.l1 + config.tv_weight * result.tv;
    if (joint) tv_loss_backward(model.field, config.tv_weight, grads.field);
    state.diagnostics.quat_violations += violations;

    std::vector<TensorRef> params = model_tensors(model);
    std::vector<std::span<double>> g = grads.tensors();
    bool finite = std::isfinite(result.loss);
    for (const auto& t : g) finite = finite && all_finite(t.data(), t.size());
    if (!finite) {
        result.skipped = true;
        ++state.diagnostics.skipped_steps;
        state.diagnostics.last_skipped_iter = state.iter;
    } else {
        for (std::size_t j = 0; j < params.size(); ++j) {
            const Group grp = params[j].group;
            if (!joint && (grp == Group::Plane || grp == Group::Mlp)) continue;
            const double lr = schedule(config.lr, grp).at(state.iter, config.total_iters);
            adam_step(params[j].data, g[j], state.moments[j], lr);
        }
        for (std::size_t i = 0; i < n; ++i) {
            state.grad_accum[i] += view_norm[i];
            state.grad_count[i] += view_count[i];
        }
    }

    ++state.iter;
    const std::uint64_t it = state.iter;
    const bool grow = it >= config.densify_from_iter && it < config.densify_stop_iter &&
                      it % config.densify_interval == 0;
    const bool prune = it % config.prune_interval == 0;
    if (grow || prune) densify_and_prune(model, state, config, grow);
    result.gaussians = model.gaussians.size();
    return result;
}

namespace {

Vec3 sample_offset(const GaussianSet& set, std::size_t i, Rng& rng) {
    const Vec4 q = normalize_quaternion(set.rotation(i));
    const Vec3 s = set.scale(i).array().exp();
    Vec3 n;
    for (int k = 0; k < 3; ++k) n[k] = rng.normal();
    return quat_to_matrix(q) * s.cwiseProduct(n);
}

} // namespace

DensifyReport densify_and_prune(Model& model, TrainState& state, const TrainConfig& config, bool grow) {
    check_alignment(model, state);
    DensifyReport report;
    GaussianSet& old = model.gaussians;
    const std::size_t n = old.size();

    GaussianSet next;
    next.sh_degree = old.sh_degree;
    std::vector<std::ptrdiff_t> source; // row of `old` whose moments carry over, -1 for new rows
    std::vector<std::size_t> clones, splits;
    if (grow) {
        std::size_t budget = config.max_gaussians == 0
                                 ? std::numeric_limits<std::size_t>::max()
                                 : (config.max_gaussians > n ? config.max_gaussians - n : 0);
        const double size_limit = config.size_threshold * state.scene_extent;
        for (std::size_t i = 0; i < n && budget > 0; ++i) {
            if (state.grad_count[i] == 0) continue;
            const double mean = state.grad_accum[i] / static_cast<double>(state.grad_count[i]);
            if (!(mean > config.grad_threshold)) continue;
            const double max_scale = std::exp(old.scale(i).maxCoeff());
            (max_scale <= size_limit ? clones : splits).push_back(i);
            --budget;
        }
    }
    std::vector<bool> is_split(n, false);
    for (std::size_t i : splits) is_split[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_split[i]) continue;
        next.push_back_from(old, i);
        source.push_back(static_cast<std::ptrdiff_t>(i));
    }
    for (std::size_t i : clones) {
        const Vec3 d = sample_offset(old, i, state.rng);
        next.push_back_from(old, i);
        const std::size_t r = next.size() - 1;
        for (int k = 0; k < 3; ++k) next.positions[3 * r + k] += d[k];
        source.push_back(-1);
    }
    const double shrink = std::log(config.split_factor);
    for (std::size_t i : splits) {
        for (int child = 0; child < 2; ++child) {
            const Vec3 d = sample_offset(old, i, state.rng);
            next.push_back_from(old, i);
            const std::size_t r = next.size() - 1;
            for (int k = 0; k < 3; ++k) {
                next.positions[3 * r + k] += d[k];
                next.scales[3 * r + k] -= shrink;
            }
            source.push_back(-1);
        }
    }
    report.cloned = clones.size();
    report.split = splits.size();

    std::vector<bool> keep(next.size(), true);
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (sigmoid(next.opacities[i]) < config.opacity_prune_threshold) {
            keep[i] = false;
            ++report.pruned;
        }
    }

    // Remap optimiser rows of the per-Gaussian tensors.
    const std::vector<TensorRef> before = model_tensors(model);
    for (std::size_t j = 0; j < kGaussianTensors; ++j) {
        const std::size_t w = before[j].row_width;
        AdamMoments& m = state.moments[j];
        AdamMoments fresh;
        fresh.step = m.step;
        for (std::size_t r = 0; r < source.size(); ++r) {
            if (!keep[r]) continue;
            for (std::size_t k = 0; k < w; ++k) {
                const bool carry = source[r] >= 0;
                const std::size_t o = static_cast<std::size_t>(carry ? source[r] : 0) * w + k;
                fresh.m.push_back(carry ? m.m[o] : 0.0);
                fresh.v.push_back(carry ? m.v[o] : 0.0);
            }
        }
        m = std::move(fresh);
    }
    next.keep(keep);
    model.gaussians = std::move(next);
    state.grad_accum.assign(model.gaussians.size(), 0.0);
    state.grad_count.assign(model.gaussians.size(), 0);
    if (grow) ++state.diagnostics.densify_events;
    ++state.diagnostics.prune_events;
    check_alignment(model, state);
    return report;
}

void check_alignment(Model& model, const TrainState& state) {
    const std::vector<TensorRef> t = model_tensors(model);
    if (t.size() != state.moments.size()) throw ShapeError("optimiser state has the wrong tensor count");
    for (std::size_t j = 0; j < t.size(); ++j) {
        if (state.moments[j].m.size() != t[j].data.size() || state.moments[j].v.size() != t[j].data.size()) {
            throw ShapeError("optimiser moments misaligned with tensor " + std::to_string(j));
        }
    }
    const std::size_t n = model.gaussians.size();
    if (state.grad_accum.size() != n || state.grad_count.size() != n) {
        throw ShapeError("densification statistics misaligned with the Gaussians");
    }
}

} // namespace gs4d
