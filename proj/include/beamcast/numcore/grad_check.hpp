#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "beamcast/numcore/ops.hpp"
#include "beamcast/numcore/rng.hpp"

namespace beamcast {

struct GradCheckEntry {
    std::string name;
    double max_relative_error = 0.0;
    Index checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> inputs;
    double tolerance = 0.0;

    double max_error() const
    {
        double worst = 0.0;
        for (const auto& e : inputs) {
            worst = std::max(worst, e.max_relative_error);
        }
        return worst;
    }

    bool passed() const { return max_error() < tolerance; }
};

struct GradCheckOptions {
    double step = 1e-5;
    // 0 checks every element; otherwise a seeded random subset per input.
    Index max_entries_per_input = 0;
    std::uint64_t seed = 17;
    // Denominator floor: gradients that are exactly zero analytically (a bias
    // feeding train-mode batchnorm) are compared against roundoff in absolute terms.
    double scale_floor = 1e-6;
};

/// Compares analytic gradients against central finite differences.
///
/// `fn` rebuilds the graph from the current values of `inputs` on every call.
/// The scalar under test is sum(fn() * R) for a fixed random R, so the whole
/// Jacobian is exercised. The error for an input tensor is
/// max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, max_i |analytic_i|, scale_floor).
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& fn,
                                  const std::vector<NamedTensor<double>>& inputs, double tolerance,
                                  GradCheckOptions options = {})
{
    Rng rng(options.seed);
    Tensor<double> probe;
    {
        NoGradGuard no_grad;
        probe = fn();
    }
    Array<double> weights(probe.size());
    for (Index i = 0; i < weights.size(); ++i) {
        weights[i] = rng.uniform(-1.0, 1.0);
    }
    const Tensor<double> weight_tensor(probe.shape(), weights);
    auto objective = [&] { return sum(mul(fn(), weight_tensor)); };

    for (const auto& in : inputs) {
        in.tensor.node()->grad.resize(0);
        in.tensor.node()->requires_grad = true;
    }
    objective().backward();

    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& in : inputs) {
        Tensor<double> t = in.tensor;
        const Array<double> analytic = t.has_grad() ? t.grad() : Array<double>(Array<double>::Zero(t.size()));
        std::vector<Index> entries(static_cast<std::size_t>(t.size()));
        for (Index i = 0; i < t.size(); ++i) {
            entries[static_cast<std::size_t>(i)] = i;
        }
        if (options.max_entries_per_input > 0 && t.size() > options.max_entries_per_input) {
            rng.shuffle(std::span<Index>(entries));
            entries.resize(static_cast<std::size_t>(options.max_entries_per_input));
        }
        Array<double> numeric(static_cast<Index>(entries.size()));
        Array<double> picked(static_cast<Index>(entries.size()));
        NoGradGuard no_grad;
        for (std::size_t j = 0; j < entries.size(); ++j) {
            const Index i = entries[j];
            const double original = t.data()[i];
            t.data()[i] = original + options.step;
            const double up = objective().item();
            t.data()[i] = original - options.step;
            const double down = objective().item();
            t.data()[i] = original;
            numeric[static_cast<Index>(j)] = (up - down) / (2.0 * options.step);
            picked[static_cast<Index>(j)] = analytic[i];
        }
        const double scale =
            std::max({numeric.abs().maxCoeff(), picked.abs().maxCoeff(), options.scale_floor});
        GradCheckEntry entry;
        entry.name = in.name;
        entry.checked = static_cast<Index>(entries.size());
        entry.max_relative_error = (picked - numeric).abs().maxCoeff() / scale;
        report.inputs.push_back(entry);
    }
    return report;
}

} // namespace beamcast
