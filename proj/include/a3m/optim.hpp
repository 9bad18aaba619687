#pragma once

#include "a3m/tensor.hpp"

#include <vector>

namespace a3m {

struct SgdOptions {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

/**
 * SGD with momentum and L2 weight decay.
 *
 * Per parameter, with g its accumulated gradient:
 *   v <- momentum * v + (g + weight_decay * p)
 *   p <- p - learning_rate * v
 * Velocities start at zero and exist exactly for the registered parameters.
 */
class SgdState {
  public:
    SgdState(std::vector<Tensor> params, SgdOptions options);

    /// Applies one update from the current gradients of the registered
    /// parameters (parameters with no gradient buffer count as zero grad).
    void step();
    void zero_grad();

    void set_learning_rate(double lr) { options_.learning_rate = lr; }
    const SgdOptions& options() const { return options_; }
    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<Vec>& velocity() const { return velocity_; }

  private:
    std::vector<Tensor> params_;
    std::vector<Vec> velocity_;
    SgdOptions options_;
};

/// Update rule on raw buffers; `velocity` is updated in place.
void sgd_update(Vec& param, const Vec& grad, Vec& velocity, const SgdOptions& options);

} // namespace a3m
