#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace gs4d {

/// Seeded generator whose complete state is the engine state, so it can be
/// checkpointed and resumed exactly. Distribution draws are implemented here
/// rather than through <random> distributions, which may cache values.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; uses two uniforms per call.
    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);

    std::string serialize() const;
    void deserialize(const std::string& state);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace gs4d
