#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "beamcast/numcore/tensor.hpp"

namespace beamcast {

/// Adam moments for an ordered parameter list.
template <typename S>
struct AdamState {
    std::uint64_t step = 0;
    std::vector<Array<S>> first_moment;
    std::vector<Array<S>> second_moment;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;

    AdamState(const ParamList<S>& params, double learning_rate) : lr(learning_rate)
    {
        for (const auto& p : params) {
            first_moment.push_back(Array<S>::Zero(p.tensor.size()));
            second_moment.push_back(Array<S>::Zero(p.tensor.size()));
        }
    }
};

/// One bias-corrected Adam update from the gradients held by `params`.
/// A parameter without a gradient is treated as having a zero gradient.
/// Every gradient is checked before any parameter moves.
template <typename S>
void adam_step(ParamList<S>& params, AdamState<S>& state)
{
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ConfigError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                          " tensors but " + std::to_string(params.size()) + " were given");
    }
    if (!(state.lr >= 0.0) || !(state.eps > 0.0) || !(state.beta1 > 0.0 && state.beta1 < 1.0) ||
        !(state.beta2 > 0.0 && state.beta2 < 1.0)) {
        throw ConfigError("adam_step: invalid hyperparameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = params[i].tensor;
        if (state.first_moment[i].size() != t.size() || state.second_moment[i].size() != t.size()) {
            throw ConfigError("adam_step: optimizer state misaligned for '" + params[i].name + "'");
        }
        if (t.has_grad() && !t.grad().isFinite().all()) {
            throw NumericalError("adam_step: non-finite gradient in parameter '" + params[i].name + "'");
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const S b1 = static_cast<S>(state.beta1);
    const S b2 = static_cast<S>(state.beta2);
    const S step_size = static_cast<S>(state.lr / bc1);
    const S bc2_sqrt = static_cast<S>(std::sqrt(bc2));
    const S eps = static_cast<S>(state.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = params[i].tensor;
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (t.has_grad()) {
            m = b1 * m + (S(1) - b1) * t.grad();
            v = b2 * v + (S(1) - b2) * t.grad().square();
        } else {
            m *= b1;
            v *= b2;
        }
        t.data() -= step_size * m / (v.sqrt() / bc2_sqrt + eps);
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(ParamList<S>& params, double max_norm)
{
    double total = 0.0;
    for (const auto& p : params) {
        if (p.tensor.has_grad()) {
            total += p.tensor.grad().template cast<double>().square().sum();
        }
    }
    const double norm = std::sqrt(total);
    if (max_norm > 0.0 && norm > max_norm) {
        const S factor = static_cast<S>(max_norm / norm);
        for (auto& p : params) {
            if (p.tensor.has_grad()) {
                p.tensor.grad() *= factor;
            }
        }
    }
    return norm;
}

template <typename S>
void zero_grad(ParamList<S>& params)
{
    for (auto& p : params) {
        p.tensor.zero_grad();
    }
}

/// Step decay: initial_lr * decay_factor^(number of milestones <= epoch).
struct LrSchedule {
    double initial_lr = 1e-4;
    std::vector<int> milestones{30, 60, 90};
    double decay_factor = 0.1;

    void validate() const
    {
        if (!(initial_lr >= 0.0) || !std::isfinite(initial_lr)) {
            throw ConfigError("lr must be a finite non-negative number");
        }
        if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
            throw ConfigError("decay_factor must lie in (0, 1)");
        }
        if (!std::is_sorted(milestones.begin(), milestones.end()) ||
            std::adjacent_find(milestones.begin(), milestones.end()) != milestones.end()) {
            throw ConfigError("milestones must be strictly increasing");
        }
    }

    double lr_at(int epoch) const
    {
        const auto passed = std::count_if(milestones.begin(), milestones.end(), [epoch](int m) { return m <= epoch; });
        return initial_lr * std::pow(decay_factor, static_cast<double>(passed));
    }
};

} // namespace beamcast
