#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gs4d {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments and step count of one parameter tensor.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
    std::size_t size() const { return m.size(); }

    bool operator==(const AdamMoments&) const = default;
};

/// One bias-corrected Adam update of `params` in place. Returns false and
/// leaves everything untouched if any gradient is non-finite.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& state,
               double lr, const AdamOptions& options = {});

} // namespace gs4d
