#include "appp/optim.hpp"

#include "appp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace appp {

AdamState AdamState::for_params(const MlpParams& params, const AdamConfig& config) {
    return {config, 0, params.zeros_like(), params.zeros_like()};
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
    if (grads.param_count() != params.param_count() || state.first_moment.param_count() != params.param_count() ||
        grads.layers.size() != params.layers.size()) {
        throw ShapeError("adam_step: parameter, gradient and moment shapes disagree");
    }
    if (!grads.all_finite()) throw NumericsError("adam_step: non-finite gradient");

    const auto& c = state.config;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);

    auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& pl = params.layers[l];
        auto& ml = state.first_moment.layers[l];
        auto& vl = state.second_moment.layers[l];
        const auto& gl = grads.layers[l];
        update(pl.weight.values(), gl.weight.values(), ml.weight.values(), vl.weight.values());
        update(pl.bias, gl.bias, ml.bias, vl.bias);
    }
}

GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> point, double tolerance, double h) {
    std::vector<double> x(point.begin(), point.end());
    std::vector<double> analytic(x.size(), 0.0);
    f(x, analytic);

    GradCheckReport report;
    std::vector<double> none;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x, none);
        x[i] = orig - h;
        const double fm = f(x, none);
        x[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        double rel = std::abs(analytic[i] - numeric) / denom;
        if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
        if (i == 0 || rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

} // namespace appp
