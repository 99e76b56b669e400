#pragma once

#include "appp/rng.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace appp {

enum class LatentKind { normal, uniform, spherical };

std::string to_string(LatentKind k);
/// Accepts "normal"/"uniform"/"spherical"; throws ParseError otherwise.
LatentKind latent_kind_from_string(const std::string& s);

struct LatentSpace {
    LatentKind kind = LatentKind::spherical;
    std::size_t dim = 32;

    void validate() const; // dim >= 2
    friend bool operator==(const LatentSpace&, const LatentSpace&) = default;
};

struct LatentVector {
    std::vector<double> values;
    LatentSpace space;

    /// Spherical: unit norm within 1e-9. Uniform: every component in [-1, 1]. Normal: finite.
    bool satisfies_invariant() const;
};

/// Draws from N(0,I), U(-1,1)^d or the normalized Gaussian.
LatentVector sample(const LatentSpace& space, Rng& rng);
LatentVector sample(const LatentSpace& space, std::uint64_t seed);

/// Maps raw onto the support: renormalize, clamp, or identity.
/// Throws DegenerateInput for a (near-)zero vector on the sphere.
LatentVector project(const LatentSpace& space, std::span<const double> raw);

/// (1 - t/T) z0 + (t/T) zT. Throws WrongInterpolator on the sphere.
LatentVector lerp(const LatentVector& z0, const LatentVector& zT, double t, double T);

/// Great-circle interpolation. Below 1e-7 rad it falls back to lerp followed by renormalization;
/// within 1e-7 rad of antipodal it throws AntipodalPoints.
LatentVector slerp(const LatentVector& z0, const LatentVector& zT, double t, double T);

/// lerp or slerp, whichever the space calls for.
LatentVector interpolate(const LatentVector& z0, const LatentVector& zT, double t, double T);

/// Angle between two unit vectors, in [0, pi].
double angular_distance(std::span<const double> a, std::span<const double> b);

inline constexpr double kSlerpParallelThreshold = 1e-7;

} // namespace appp
