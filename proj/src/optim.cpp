#include "a3m/optim.hpp"

#include "a3m/errors.hpp"

namespace a3m {

void sgd_update(Vec& param, const Vec& grad, Vec& velocity, const SgdOptions& options)
{
    if (param.size() != grad.size() || param.size() != velocity.size())
        throw DimensionError("sgd_update: parameter, gradient and velocity sizes disagree");
    velocity = options.momentum * velocity + grad + options.weight_decay * param;
    param -= options.learning_rate * velocity;
}

SgdState::SgdState(std::vector<Tensor> params, SgdOptions options)
    : params_(std::move(params)), options_(options)
{
    if (options_.learning_rate < 0.0 || options_.momentum < 0.0 || options_.momentum >= 1.0 ||
        options_.weight_decay < 0.0)
        throw ConfigError("sgd: need lr >= 0, momentum in [0,1), weight_decay >= 0");
    velocity_.reserve(params_.size());
    for (const auto& p : params_)
        velocity_.push_back(Vec::Zero(p.data().size()));
}

void SgdState::step()
{
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (p.has_grad()) {
            sgd_update(p.data(), p.grad(), velocity_[i], options_);
        } else {
            const Vec zero = Vec::Zero(p.data().size());
            sgd_update(p.data(), zero, velocity_[i], options_);
        }
    }
}

void SgdState::zero_grad()
{
    for (auto& p : params_)
        p.zero_grad();
}

} // namespace a3m
