#pragma once

#include "gs4d/adam.hpp"
#include "gs4d/camera.hpp"
#include "gs4d/config.hpp"
#include "gs4d/deform.hpp"
#include "gs4d/gaussian.hpp"
#include "gs4d/hexplane.hpp"
#include "gs4d/image.hpp"
#include "gs4d/ply.hpp"
#include "gs4d/render.hpp"
#include "gs4d/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gs4d {

/// A training or evaluation view with its image loaded.
struct Frame {
    Camera camera;
    double time = 0.0; // normalised to [0, 1]
    Image image;
};

/// Canonical Gaussians, the spatial-temporal field and the decoder.
struct Model {
    GaussianSet gaussians;
    HexPlaneField field;
    DeformNet net;

    /// Throws if the parts are mutually inconsistent.
    void validate() const;

    bool operator==(const Model&) const = default;
};

/// Deformed set at time t (static set when `deformed` is false).
GaussianSet model_at(const Model& model, double t, bool deformed = true);

/// Renders the model at time t from a camera.
RenderedImage render_model(const Model& model, const Camera& camera, double t,
                           const Vec3& background, bool deformed = true);

enum class Phase { Warmup, Joint };

/// Warmup while iter < warmup_iters, Joint afterwards.
Phase phase_at(const TrainConfig& config, std::uint64_t iter);

/// Parameter groups sharing a learning-rate schedule.
enum class Group { Position, Rotation, Scale, Opacity, ShDc, ShRest, Plane, Mlp };

struct Diagnostics {
    std::uint64_t skipped_steps = 0;     // non-finite gradients
    std::uint64_t last_skipped_iter = 0;
    std::uint64_t quat_violations = 0;   // degenerate deformed quaternions
    std::uint64_t densify_events = 0;
    std::uint64_t prune_events = 0;

    bool operator==(const Diagnostics&) const = default;
};

struct TrainState {
    std::uint64_t iter = 0;
    /// One entry per tensor of model_tensors(), in the same order.
    std::vector<AdamMoments> moments;
    /// Densification statistics: summed NDC-space mean gradient norms and
    /// the number of steps each Gaussian was visible.
    std::vector<double> grad_accum;
    std::vector<std::uint64_t> grad_count;
    Rng rng;
    double scene_extent = 1.0;
    Diagnostics diagnostics;

    bool operator==(const TrainState&) const = default;
};

/// Mutable view of one parameter tensor.
struct TensorRef {
    std::span<double> data;
    Group group;
    std::size_t row_width = 0; // > 0 for per-Gaussian tensors
};

/// Every trainable tensor in a fixed order: the six Gaussian arrays, the
/// planes (level-major), the fusion MLP, then the enabled deform heads.
std::vector<TensorRef> model_tensors(Model& model);

/// Gradients with the same structure as Model.
struct ModelGrads {
    GaussianGrads gaussians;
    FieldGrads field;
    DeformNet net;

    static ModelGrads zeros_like(const Model& model);
    /// Same order as model_tensors().
    std::vector<std::span<double>> tensors();
};

/// Half the scene diagonal spanned by camera centres, times 1.1.
double scene_extent(std::span<const Frame> frames);

/// Fresh optimiser state for a model.
TrainState init_state(const TrainConfig& config, Model& model, double scene_extent);

/// Builds the model: Gaussians from points or random, field bounds from
/// `bounds`, zero-initialised decoder heads.
Model create_model(const TrainConfig& config, const GaussianSet& gaussians, const Bounds& bounds,
                   Rng& rng);

/// Initial Gaussians from a point cloud ([N][3], optional colours [N][3] in
/// [0, 1]). Scales are log of the mean distance to the 3 nearest
/// neighbours, opacity 0.1, identity rotations, SH DC from colour. With no
/// points, `random_count` centres are drawn uniformly in `bounds`.
GaussianSet init_gaussians(std::span<const double> points, std::span<const double> colors,
                           int sh_degree, const Bounds& bounds, std::size_t random_count, Rng& rng);

struct TrainingStart {
    Model model;
    TrainState state;
};

/// Fresh model and state for a run on `train`: Gaussians from `points` when
/// given (random in `bounds` otherwise), every draw seeded by config.seed.
TrainingStart start_training(const TrainConfig& config, std::span<const Frame> train,
                             const PointCloud* points, const Bounds& bounds);

/// Mean absolute per-channel error. Throws ShapeError on size mismatch.
double l1_loss(const Image& rendered, const Image& target);

/// dL1/drendered: sign(rendered - target) / (3 H W).
Image l1_loss_backward(const Image& rendered, const Image& target);

/// L1 + tv_weight * tv_loss(field).
double total_loss(const Image& rendered, const Image& target, const HexPlaneField& field,
                  double tv_weight);

/// L1 loss of one frame; the model is deformed to the frame time when
/// `deformed` is set.
double frame_loss(const Model& model, const Frame& frame, const Vec3& background, bool deformed);

struct FrameBackward {
    double l1 = 0.0;
    std::vector<double> mean2d; // dL/d(projected centre), [N][2]
    std::vector<bool> visible;
    std::size_t quat_violations = 0;
};

/// Adds `weight` * dL1/dparams of one frame into `grads`. Only Gaussian
/// gradients are produced when `deformed` is false.
FrameBackward frame_loss_backward(const Model& model, const Frame& frame, const Vec3& background,
                                  bool deformed, double weight, ModelGrads& grads);

struct StepResult {
    std::uint64_t iter = 0; // iteration index this step ran as
    Phase phase = Phase::Warmup;
    double loss = 0.0;
    double l1 = 0.0;
    double tv = 0.0;
    bool skipped = false;
    std::size_t gaussians = 0;
};

/// One optimisation step: sample batch_size frames with replacement, render
/// (deformed in the Joint phase), backpropagate, Adam-update the active
/// groups and run densification when scheduled.
StepResult train_step(Model& model, TrainState& state, std::span<const Frame> frames,
                      const TrainConfig& config);

struct DensifyReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

/// Clones small / splits large Gaussians whose mean screen-space gradient
/// exceeds grad_threshold (when `grow`), then prunes low-opacity ones.
/// Optimiser rows follow the Gaussians; new rows start at zero.
DensifyReport densify_and_prune(Model& model, TrainState& state, const TrainConfig& config, bool grow);

/// Throws ShapeError unless every moment tensor matches its parameter.
void check_alignment(Model& model, const TrainState& state);

} // namespace gs4d
