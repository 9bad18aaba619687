#include "a3m/grad_check.hpp"

#include "a3m/errors.hpp"
#include "a3m/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace a3m {

namespace {

double eval_loss(const std::function<Tensor()>& loss_fn)
{
    const double v = loss_fn().item();
    if (!std::isfinite(v))
        throw NumericError("grad_check: loss is not finite");
    return v;
}

} // namespace

double grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params, const GradCheckOptions& options)
{
    std::vector<bool> previous_flags;
    for (auto& p : params) {
        previous_flags.push_back(p.requires_grad());
        p.set_requires_grad(true);
        p.zero_grad();
    }

    std::vector<Vec> analytic;
    {
        Tape tape;
        Tensor loss = loss_fn();
        if (!std::isfinite(loss.item()))
            throw NumericError("grad_check: loss is not finite");
        tape.backward(loss);
        for (auto& p : params) {
            analytic.push_back(p.grad());
            if (!analytic.back().allFinite())
                throw NumericError("grad_check: analytic gradient is not finite");
        }
    }

    Rng rng(options.seed);
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
            rng.shuffle(std::span<std::size_t>(coords));
            coords.resize(options.max_coords_per_param);
        }
        for (std::size_t c : coords) {
            const double original = p[c];
            p[c] = original + options.step;
            const double up = eval_loss(loss_fn);
            p[c] = original - options.step;
            const double down = eval_loss(loss_fn);
            p[c] = original;
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic[pi][static_cast<Eigen::Index>(c)];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
    }

    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].zero_grad();
        params[i].set_requires_grad(previous_flags[i]);
    }
    return worst;
}

} // namespace a3m
