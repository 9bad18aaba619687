#pragma once

#include "a3m/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace a3m {

struct GradCheckOptions {
    double step = 1e-5;
    /// Coordinates checked per parameter; 0 checks all of them.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
};

/**
 * Compares reverse-mode gradients of a scalar computation with central
 * differences. `loss_fn` must rebuild its graph on every call from the
 * current values of `params`.
 *
 * Returns the max over checked coordinates of
 *   |analytic - numeric| / max(1, |analytic|).
 * Throws NumericError if the loss or a gradient is not finite.
 */
double grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                  const GradCheckOptions& options = {});

} // namespace a3m
