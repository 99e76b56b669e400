#pragma once

#include "appp/body_model.hpp"
#include "appp/rng.hpp"
#include "appp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace appp::test {

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * standard_normal(rng);
    return v;
}

inline std::vector<double> uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(rng, lo, hi);
    return v;
}

inline Tensor2 normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    return Tensor2(rows, cols, normal_vector(rng, rows * cols, scale));
}

inline PoseVector random_pose(Rng& rng, std::size_t joints, double scale = 0.5) {
    auto v = normal_vector(rng, 3 * joints, scale);
    for (auto& x : v) x = std::clamp(x, -3.0, 3.0);
    return PoseVector(std::move(v));
}

inline double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace appp::test
