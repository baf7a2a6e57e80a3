#pragma once

// Central finite-difference checking of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gradcheck {

struct Result {
    std::size_t checked = 0;
    std::size_t excluded = 0; // perturbation changed a discrete decision
    double max_rel = 0.0;
    std::string worst;

    double excluded_fraction() const {
        const std::size_t n = checked + excluded;
        return n == 0 ? 0.0 : static_cast<double>(excluded) / n;
    }
};

inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

struct Tensor {
    std::string name;
    std::span<double> param;
    std::span<const double> grad;
};

/// Perturbs every `stride`-th entry of each tensor by +-h. Entries whose
/// perturbed evaluations report a different `signature` than the base point
/// are excluded: the loss is not differentiable across that change.
inline Result check(const std::vector<Tensor>& tensors, const std::function<double()>& loss,
                    const std::function<std::uint64_t()>& signature, double h, std::size_t stride = 1,
                    Result acc = {}) {
    const std::uint64_t base = signature ? signature() : 0;
    for (const Tensor& t : tensors) {
        for (std::size_t i = 0; i < t.param.size(); i += stride) {
            const double v = t.param[i];
            t.param[i] = v + h;
            const double lp = loss();
            const std::uint64_t sp = signature ? signature() : 0;
            t.param[i] = v - h;
            const double lm = loss();
            const std::uint64_t sm = signature ? signature() : 0;
            t.param[i] = v;
            if (sp != base || sm != base) {
                ++acc.excluded;
                continue;
            }
            const double numeric = (lp - lm) / (2 * h);
            const double e = rel_err(t.grad[i], numeric);
            ++acc.checked;
            if (e > acc.max_rel) {
                acc.max_rel = e;
                std::ostringstream os;
                os << t.name << "[" << i << "] analytic " << t.grad[i] << " numeric " << numeric;
                acc.worst = os.str();
            }
        }
    }
    return acc;
}

} // namespace gradcheck
