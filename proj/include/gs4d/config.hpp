#pragma once

#include "gs4d/deform.hpp"
#include "gs4d/hexplane.hpp"
#include "gs4d/math.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gs4d {

/// Start and end of a log-space exponential learning-rate decay.
struct LrSchedule {
    double init = 1e-3;
    double final = 1e-3;

    /// lr at `iter` of `total`: exp(lerp(log init, log final, iter / total)).
    double at(std::uint64_t iter, std::uint64_t total) const;

    bool operator==(const LrSchedule&) const = default;
};

struct LrTable {
    LrSchedule position{1.6e-3, 1.6e-4};
    LrSchedule plane{1.6e-3, 1.6e-4};
    LrSchedule mlp{1.6e-4, 1.6e-5};
    LrSchedule sh_dc{2.5e-3, 2.5e-3};
    LrSchedule sh_rest{1.25e-4, 1.25e-4};
    LrSchedule opacity{0.05, 0.05};
    LrSchedule scale{5e-3, 5e-3};
    LrSchedule rotation{1e-3, 1e-3};

    bool operator==(const LrTable&) const = default;
};

struct TrainConfig {
    std::uint64_t seed = 0;
    std::uint64_t warmup_iters = 3000;
    std::uint64_t total_iters = 20000; // includes the warm-up

    std::uint64_t densify_from_iter = 500;
    std::uint64_t densify_interval = 100;
    std::uint64_t densify_stop_iter = 15000;
    std::uint64_t prune_interval = 8000;
    double grad_threshold = 2e-4;    // mean screen-space (NDC) gradient norm
    double size_threshold = 0.01;    // fraction of the scene extent
    double opacity_prune_threshold = 0.005;
    double split_factor = 1.6;
    std::uint64_t max_gaussians = 0; // 0: unlimited

    double tv_weight = 2e-4;
    std::uint64_t batch_size = 1;
    LrTable lr;

    int sh_degree = 3;
    Vec3 background = Vec3::Ones();
    std::uint64_t init_random_count = 2000; // used when no point cloud is given

    FieldConfig field;
    DeformConfig deform;

    std::uint64_t log_interval = 100;
    std::uint64_t checkpoint_interval = 0; // 0: only the final checkpoint

    /// Throws InvalidInput naming the first inconsistent field.
    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

/// Applies one `key = value` setting. Throws InvalidInput for unknown keys or
/// unparsable values.
void apply_setting(TrainConfig& config, std::string_view key, std::string_view value);

/// Parses `key = value` lines ('#' starts a comment) into ordered pairs.
/// Throws ParseError with the line number on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

/// Applies every line of a key=value document.
void apply_config_text(TrainConfig& config, std::string_view text);

/// Serialises every setting; apply_config_text(to_config_text(c)) == c.
std::string to_config_text(const TrainConfig& config);

} // namespace gs4d
