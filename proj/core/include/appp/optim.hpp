#pragma once

#include "appp/mlp.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace appp {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    MlpParams first_moment;
    MlpParams second_moment;

    static AdamState for_params(const MlpParams& params, const AdamConfig& config = {});
};

/// Bias-corrected Adam update in place. Throws NumericsError (params untouched)
/// when any gradient entry is non-finite, ShapeError when shapes disagree.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads);

/// Scalar function of a point. When grad is non-empty it receives the analytic gradient.
using ScalarFunction = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool passed = true;
};

/// Compares the analytic gradient with central differences of step h.
/// Relative error of entry i is |a-b| / max(|a|, |b|, 1e-8).
GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> point, double tolerance,
                           double h = 1e-5);

} // namespace appp
