#include "appp/latent_space.hpp"

#include "appp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace appp {

std::string to_string(LatentKind k) {
    switch (k) {
    case LatentKind::normal: return "normal";
    case LatentKind::uniform: return "uniform";
    case LatentKind::spherical: return "spherical";
    }
    return "normal";
}

LatentKind latent_kind_from_string(const std::string& s) {
    if (s == "normal") return LatentKind::normal;
    if (s == "uniform") return LatentKind::uniform;
    if (s == "spherical") return LatentKind::spherical;
    throw ParseError("unknown latent space '" + s + "'");
}

void LatentSpace::validate() const {
    if (dim < 2) throw ConfigError("latent dimension must be at least 2");
}

namespace {

double norm2(std::span<const double> v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

bool unit_norm(std::span<const double> v) { return std::abs(norm2(v) - 1.0) <= 1e-9; }

void check_same_space(const LatentVector& a, const LatentVector& b) {
    if (!(a.space == b.space) || a.values.size() != b.values.size()) {
        throw SpaceError("interpolation endpoints live in different latent spaces");
    }
}

void check_t(double t, double T) {
    if (!(T > 0.0) || t < 0.0 || t > T) throw ConfigError("interpolation requires 0 <= t <= T, T > 0");
}

} // namespace

bool LatentVector::satisfies_invariant() const {
    if (values.size() != space.dim) return false;
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    switch (space.kind) {
    case LatentKind::normal: return true;
    case LatentKind::uniform:
        return std::all_of(values.begin(), values.end(), [](double v) { return v >= -1.0 && v <= 1.0; });
    case LatentKind::spherical: return std::abs(norm2(values) - 1.0) <= 1e-9;
    }
    return false;
}

LatentVector sample(const LatentSpace& space, Rng& rng) {
    space.validate();
    LatentVector z{std::vector<double>(space.dim), space};
    switch (space.kind) {
    case LatentKind::normal:
        for (auto& v : z.values) v = standard_normal(rng);
        break;
    case LatentKind::uniform:
        for (auto& v : z.values) v = uniform(rng, -1.0, 1.0);
        break;
    case LatentKind::spherical: {
        double n = 0.0;
        do {
            for (auto& v : z.values) v = standard_normal(rng);
            n = norm2(z.values);
        } while (n < 1e-12);
        for (auto& v : z.values) v /= n;
        break;
    }
    }
    return z;
}

LatentVector sample(const LatentSpace& space, std::uint64_t seed) {
    Rng rng(seed);
    return sample(space, rng);
}

LatentVector project(const LatentSpace& space, std::span<const double> raw) {
    if (raw.size() != space.dim) throw SpaceError("project: vector length does not match the latent dimension");
    LatentVector z{std::vector<double>(raw.begin(), raw.end()), space};
    switch (space.kind) {
    case LatentKind::normal: break;
    case LatentKind::uniform:
        for (auto& v : z.values) v = std::clamp(v, -1.0, 1.0);
        break;
    case LatentKind::spherical: {
        const double n = norm2(raw);
        if (!(n > 1e-12)) throw DegenerateInput("project: cannot renormalize a zero vector onto the sphere");
        for (auto& v : z.values) v /= n;
        break;
    }
    }
    return z;
}

LatentVector lerp(const LatentVector& z0, const LatentVector& zT, double t, double T) {
    check_same_space(z0, zT);
    if (z0.space.kind == LatentKind::spherical) {
        throw WrongInterpolator("lerp leaves the sphere; use slerp for spherical latents");
    }
    check_t(t, T);
    if (z0.values == zT.values) return z0;
    const double a = t / T;
    LatentVector z{std::vector<double>(z0.values.size()), z0.space};
    for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] = (1.0 - a) * z0.values[i] + a * zT.values[i];
    return z;
}

LatentVector slerp(const LatentVector& z0, const LatentVector& zT, double t, double T) {
    check_same_space(z0, zT);
    check_t(t, T);
    if (!unit_norm(z0.values) || !unit_norm(zT.values)) throw SpaceError("slerp: endpoints must have unit norm");
    const double theta = angular_distance(z0.values, zT.values);
    if (theta > std::numbers::pi - kSlerpParallelThreshold) {
        throw AntipodalPoints("slerp: endpoints are antipodal, the great circle is not unique");
    }
    if (t == 0.0 || z0.values == zT.values) return z0;
    const double a = t / T;
    LatentVector z{std::vector<double>(z0.values.size()), z0.space};
    if (theta < kSlerpParallelThreshold) {
        for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] = (1.0 - a) * z0.values[i] + a * zT.values[i];
        return project(LatentSpace{LatentKind::spherical, z.values.size()}, z.values);
    }
    const double s = std::sin(theta);
    const double c0 = std::sin((1.0 - a) * theta) / s;
    const double c1 = std::sin(a * theta) / s;
    for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] = c0 * z0.values[i] + c1 * zT.values[i];
    return z;
}

LatentVector interpolate(const LatentVector& z0, const LatentVector& zT, double t, double T) {
    return z0.space.kind == LatentKind::spherical ? slerp(z0, zT, t, T) : lerp(z0, zT, t, T);
}

double angular_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw SpaceError("angular_distance: length mismatch");
    // 2 atan2(|a-b|, |a+b|) equals arccos(<a,b>) on the unit sphere without losing
    // precision near 0 and pi.
    double diff = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        sum += (a[i] + b[i]) * (a[i] + b[i]);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

} // namespace appp
