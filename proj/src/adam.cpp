#include "gs4d/adam.hpp"

#include "gs4d/error.hpp"
#include "gs4d/math.hpp"

#include <cmath>

namespace gs4d {

bool adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& state,
               double lr, const AdamOptions& options) {
    if (params.size() != grads.size() || state.size() != params.size()) {
        throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
    }
    if (!all_finite(grads.data(), grads.size())) return false;
    ++state.step;
    const double b1 = options.beta1, b2 = options.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + options.eps);
    }
    return true;
}

} // namespace gs4d
