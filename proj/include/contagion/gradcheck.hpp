#pragma once

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "contagion/autodiff.hpp"
#include "contagion/errors.hpp"
#include "contagion/model.hpp"
#include "contagion/rng.hpp"

namespace contagion {

/// Builds a scalar loss on the given tape from bound model parameters.
using LossBuilder = std::function<ad::Var(ad::Tape&, const BoundModel&)>;

inline double eval_loss_value(ModelState& m, const LossBuilder& build) {
    ad::Tape tape;
    ModelVars mv = bind_model(tape, m, /*needs_grad=*/false);
    BoundModel bm = bound_view(mv, m);
    const double v = build(tape, bm).scalar();
    if (!std::isfinite(v)) throw NonFiniteLoss("loss evaluated to a non-finite value");
    return v;
}

/// Fills ModelState grads with the analytic gradient of the loss.
inline double eval_loss_grad(ModelState& m, const LossBuilder& build) {
    ad::Tape tape;
    ModelVars mv = bind_model(tape, m, /*needs_grad=*/true);
    BoundModel bm = bound_view(mv, m);
    ad::Var loss = build(tape, bm);
    const double v = loss.scalar();
    if (!std::isfinite(v)) throw NonFiniteLoss("loss evaluated to a non-finite value");
    m.zero_grad();
    tape.backward(loss);
    harvest_grads(mv, m);
    return v;
}

/// Central-difference audit of the analytic gradient on a random parameter
/// subsample (at least min_coords coordinates, or every coordinate when the
/// model is smaller). Deviations are measured relative to the gradient's
/// scale: max_i |analytic_i - fd_i| / max(|g|, 1e-8), where |g| is the
/// infinity norm over the sampled coordinates of both gradients. Coordinates
/// with near-zero gradients would otherwise only compare central-difference
/// roundoff against the 1e-8 floor; per-coordinate exactness of every
/// primitive is covered separately by the op-level unit checks.
inline double finite_difference_check(ModelState& m, const LossBuilder& build, double eps = 1e-5,
                                      int min_coords = 200, std::uint64_t seed = 1) {
    if (!(eps >= 1e-6 && eps <= 1e-4))
        throw DimensionMismatch("finite difference step must lie in [1e-6, 1e-4]");

    eval_loss_grad(m, build);
    std::vector<Matrix> analytic;
    std::vector<Matrix*> values;
    m.for_each_param([&](Param& p) {
        analytic.push_back(p.grad);
        values.push_back(&p.value);
    });

    std::vector<std::pair<int, std::size_t>> coords; // (param index, flat index)
    for (std::size_t pi = 0; pi < values.size(); ++pi)
        for (std::size_t k = 0; k < values[pi]->size(); ++k)
            coords.push_back({static_cast<int>(pi), k});
    Rng rng(seed);
    rng.shuffle(coords);
    const std::size_t n = std::min(coords.size(), static_cast<std::size_t>(min_coords));

    double scale = 0.0;
    double max_abs_dev = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        auto [pi, k] = coords[c];
        double& slot = values[static_cast<std::size_t>(pi)]->a[k];
        const double saved = slot;
        slot = saved + eps;
        const double up = eval_loss_value(m, build);
        slot = saved - eps;
        const double down = eval_loss_value(m, build);
        slot = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double a = analytic[static_cast<std::size_t>(pi)].a[k];
        scale = std::max({scale, std::abs(a), std::abs(fd)});
        max_abs_dev = std::max(max_abs_dev, std::abs(a - fd));
    }
    return max_abs_dev / std::max(scale, 1e-8);
}

} // namespace contagion
