#include "appp/prior_models.hpp"

#include "appp/errors.hpp"
#include "appp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace appp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112; // log(2 pi)

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// log w_i + log N(x; mu_i, diag(var_i)) for every component.
void component_log_densities(const GmmPrior& g, std::span<const double> x, std::span<double> out) {
    const std::size_t D = g.dim();
    for (std::size_t i = 0; i < g.components(); ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double var = g.variances(i, j);
            const double diff = x[j] - g.means(i, j);
            q += kLog2Pi + std::log(var) + diff * diff / var;
        }
        out[i] = (g.weights[i] > 0.0 ? std::log(g.weights[i]) : -std::numeric_limits<double>::infinity()) - 0.5 * q;
    }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
}

} // namespace

GmmFitResult gmm_fit_em(const Tensor2& data, std::size_t C, std::uint64_t seed, std::size_t max_iterations,
                        double tolerance) {
    const std::size_t N = data.rows();
    const std::size_t D = data.cols();
    if (C == 0) throw ConfigError("gmm_fit_em: need at least one component");
    if (N < C) throw ConfigError("gmm_fit_em: fewer data points than components");

    GmmFitResult result;
    GmmPrior& g = result.gmm;
    g.weights.assign(C, 1.0 / static_cast<double>(C));
    g.means = Tensor2(C, D);
    g.variances = Tensor2(C, D);

    // k-means++ seeding of the means.
    Rng rng(derive_seed(seed, "gmm-init"));
    std::vector<double> d2(N, std::numeric_limits<double>::infinity());
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
    for (std::size_t c = 0; c < C; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (double v : d2) total += v;
            if (total > 0.0) {
                double u = uniform(rng, 0.0, total);
                pick = N - 1;
                for (std::size_t i = 0; i < N; ++i) {
                    u -= d2[i];
                    if (u <= 0.0) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
            }
        }
        for (std::size_t j = 0; j < D; ++j) g.means(c, j) = data(pick, j);
        for (std::size_t i = 0; i < N; ++i) d2[i] = std::min(d2[i], squared_distance(data.row(i), g.means.row(c)));
    }
    // Initial variances: global per-dimension variance.
    std::vector<double> mean(D, 0.0), var(D, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < D; ++j) mean[j] += data(i, j) / static_cast<double>(N);
    }
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < D; ++j) var[j] += (data(i, j) - mean[j]) * (data(i, j) - mean[j]) / static_cast<double>(N);
    }
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < D; ++j) g.variances(c, j) = std::max(var[j], kGmmVarianceFloor);
    }

    Tensor2 resp(N, C);
    std::vector<double> logp(C);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        // E-step.
        double ll = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            component_log_densities(g, data.row(i), logp);
            const double lse = log_sum_exp(logp);
            ll += lse;
            for (std::size_t c = 0; c < C; ++c) resp(i, c) = std::exp(logp[c] - lse);
        }
        ll /= static_cast<double>(N);
        if (!std::isfinite(ll)) throw NumericsError("gmm_fit_em: non-finite log-likelihood");
        result.log_likelihood.push_back(ll);
        if (it > 0) {
            const double prev = result.log_likelihood[it - 1];
            if (ll - prev < tolerance * std::max(1.0, std::abs(prev))) break;
        }

        // M-step.
        for (std::size_t c = 0; c < C; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < N; ++i) nk += resp(i, c);
            g.weights[c] = nk / static_cast<double>(N);
            if (nk < 1e-12) {
                result.warnings.push_back("iteration " + std::to_string(it) + ": component " + std::to_string(c) +
                                          " collapsed (no responsibility); kept previous mean and variance");
                continue;
            }
            for (std::size_t j = 0; j < D; ++j) {
                double m = 0.0;
                for (std::size_t i = 0; i < N; ++i) m += resp(i, c) * data(i, j);
                g.means(c, j) = m / nk;
            }
            bool floored = false;
            for (std::size_t j = 0; j < D; ++j) {
                double v = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double diff = data(i, j) - g.means(c, j);
                    v += resp(i, c) * diff * diff;
                }
                v /= nk;
                if (v < kGmmVarianceFloor) {
                    v = kGmmVarianceFloor;
                    floored = true;
                }
                g.variances(c, j) = v;
            }
            if (floored) {
                result.warnings.push_back("iteration " + std::to_string(it) + ": component " + std::to_string(c) +
                                          " variance floored at 1e-6");
            }
        }
        double wsum = 0.0;
        for (double w : g.weights) wsum += w;
        for (double& w : g.weights) w /= wsum;
    }
    return result;
}

double gmm_neg_log_prob(const GmmPrior& gmm, std::span<const double> x, std::span<double> grad) {
    if (x.size() != gmm.dim()) throw ShapeError("gmm_neg_log_prob: dimension mismatch");
    std::vector<double> logp(gmm.components());
    component_log_densities(gmm, x, logp);
    const double lse = log_sum_exp(logp);
    if (!grad.empty()) {
        if (grad.size() != x.size()) throw ShapeError("gmm_neg_log_prob: gradient size mismatch");
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < gmm.components(); ++i) {
            const double r = std::exp(logp[i] - lse);
            if (r == 0.0) continue;
            for (std::size_t j = 0; j < x.size(); ++j) grad[j] += r * (x[j] - gmm.means(i, j)) / gmm.variances(i, j);
        }
    }
    return -lse;
}

Tensor2 gmm_sample(const GmmPrior& gmm, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::discrete_distribution<std::size_t> pick(gmm.weights.begin(), gmm.weights.end());
    Tensor2 out(n, gmm.dim());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = pick(rng);
        for (std::size_t j = 0; j < gmm.dim(); ++j) {
            const double v = gmm.means(c, j) + std::sqrt(gmm.variances(c, j)) * standard_normal(rng);
            out(i, j) = std::clamp(v, -std::numbers::pi, std::numbers::pi);
        }
    }
    return out;
}

} // namespace appp
