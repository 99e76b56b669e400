#include "doctest.h"
#include "support.hpp"

#include "appp/errors.hpp"
#include "appp/latent_space.hpp"

#include <cmath>
#include <numbers>

using namespace appp;
using appp::test::norm;

namespace {

LatentVector on_sphere(Rng& rng, std::size_t d) { return sample(LatentSpace{LatentKind::spherical, d}, rng); }

LatentVector vec(std::vector<double> v, LatentKind kind) {
    const std::size_t d = v.size();
    return LatentVector{std::move(v), LatentSpace{kind, d}};
}

} // namespace

TEST_CASE("latent kind names round trip") {
    for (auto k : {LatentKind::normal, LatentKind::uniform, LatentKind::spherical}) {
        CHECK(latent_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(latent_kind_from_string("sphere"), ParseError);
    CHECK_THROWS(LatentSpace{LatentKind::normal, 1}.validate());
}

TEST_CASE("spherical samples have unit norm") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) CHECK(std::abs(norm(on_sphere(rng, 32).values) - 1.0) < 1e-12);
}

TEST_CASE("uniform sample mean and normal sample covariance") {
    const std::size_t n = 100000, d = 4;
    Rng rng(2);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = sample(LatentSpace{LatentKind::uniform, d}, rng);
        for (std::size_t j = 0; j < d; ++j) mean[j] += z.values[j] / static_cast<double>(n);
    }
    for (double m : mean) CHECK(std::abs(m) < 0.02);

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = sample(LatentSpace{LatentKind::normal, d}, rng);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += z.values[a] * z.values[b] / static_cast<double>(n);
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) CHECK(std::abs(cov[a * d + b] - (a == b ? 1.0 : 0.0)) < 0.05);
    }
}

TEST_CASE("samples satisfy their space invariant over 1e6 draws") {
    Rng rng(3);
    std::size_t bad = 0;
    for (auto kind : {LatentKind::normal, LatentKind::uniform, LatentKind::spherical}) {
        for (int i = 0; i < 333334; ++i) bad += sample(LatentSpace{kind, 8}, rng).satisfies_invariant() ? 0 : 1;
    }
    CHECK(bad == 0);
}

TEST_CASE("seeded sampling is reproducible") {
    const LatentSpace s{LatentKind::spherical, 16};
    CHECK(sample(s, 42).values == sample(s, 42).values);
    CHECK(sample(s, 42).values != sample(s, 43).values);
}

TEST_CASE("projection onto each support") {
    std::vector<double> raw(8, 0.0);
    raw[0] = 2.0;
    const auto s = project(LatentSpace{LatentKind::spherical, 8}, raw);
    CHECK(s.values[0] == 1.0);
    for (std::size_t i = 1; i < 8; ++i) CHECK(s.values[i] == 0.0);

    std::vector<double> u{1.5, -0.3, -7.0, 0.99};
    const auto pu = project(LatentSpace{LatentKind::uniform, 4}, u);
    CHECK(pu.values == std::vector<double>{1.0, -0.3, -1.0, 0.99});

    const auto pn = project(LatentSpace{LatentKind::normal, 4}, u);
    CHECK(pn.values == u);

    CHECK_THROWS_AS(project(LatentSpace{LatentKind::spherical, 4}, std::vector<double>(4, 0.0)), DegenerateInput);
    CHECK_THROWS_AS(project(LatentSpace{LatentKind::normal, 4}, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("projection is idempotent") {
    Rng rng(4);
    for (auto kind : {LatentKind::normal, LatentKind::uniform, LatentKind::spherical}) {
        const LatentSpace sp{kind, 6};
        for (int i = 0; i < 200; ++i) {
            const auto raw = test::normal_vector(rng, 6, 2.0);
            const auto once = project(sp, raw);
            const auto twice = project(sp, once.values);
            for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(once.values[j] - twice.values[j]) < 1e-15);
        }
    }
}

TEST_CASE("lerp: endpoints, symmetry and affine oracle") {
    Rng rng(5);
    const LatentSpace sp{LatentKind::normal, 8};
    const auto a = sample(sp, rng), b = sample(sp, rng);
    CHECK(lerp(a, b, 0, 10).values == a.values);
    CHECK(lerp(a, b, 10, 10).values == b.values);
    auto neg = a;
    for (auto& v : neg.values) v = -v;
    for (double v : lerp(a, neg, 5, 10).values) CHECK(std::abs(v) < 1e-15);
    for (int t = 0; t <= 10; ++t) {
        const auto z = lerp(a, b, t, 10);
        const double s = t / 10.0;
        for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(z.values[j] - ((1 - s) * a.values[j] + s * b.values[j])) < 1e-15);
    }
    Rng r2(6);
    CHECK_THROWS_AS(lerp(on_sphere(r2, 8), on_sphere(r2, 8), 1, 2), WrongInterpolator);
}

TEST_CASE("slerp: endpoints and the orthogonal midpoint") {
    Rng rng(7);
    const auto a = on_sphere(rng, 16), b = on_sphere(rng, 16);
    CHECK(slerp(a, b, 0, 7).values == a.values);
    const auto end = slerp(a, b, 7, 7);
    for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(end.values[j] - b.values[j]) < 1e-12);

    const auto e1 = vec({1, 0, 0}, LatentKind::spherical), e2 = vec({0, 1, 0}, LatentKind::spherical);
    const auto mid = slerp(e1, e2, 1, 2);
    CHECK(std::abs(mid.values[0] - 1 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(mid.values[1] - 1 / std::sqrt(2.0)) < 1e-15);
    CHECK(mid.values[2] == 0.0);
}

TEST_CASE("slerp in 2D is angle interpolation") {
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        const double a0 = uniform(rng, -3, 3);
        const double delta = uniform(rng, -3.0, 3.0);
        const auto z0 = vec({std::cos(a0), std::sin(a0)}, LatentKind::spherical);
        const auto z1 = vec({std::cos(a0 + delta), std::sin(a0 + delta)}, LatentKind::spherical);
        for (int t = 0; t <= 20; ++t) {
            const auto z = slerp(z0, z1, t, 20);
            const double ang = a0 + delta * t / 20.0;
            CHECK(std::abs(z.values[0] - std::cos(ang)) < 1e-12);
            CHECK(std::abs(z.values[1] - std::sin(ang)) < 1e-12);
        }
    }
}

TEST_CASE("slerp near-parallel fallback and antipodal error") {
    const auto a = vec({1, 0, 0}, LatentKind::spherical);
    const double eps = 1e-9;
    const auto b = vec({std::cos(eps), std::sin(eps), 0}, LatentKind::spherical);
    const auto m = slerp(a, b, 1, 2);
    CHECK(std::abs(norm(m.values) - 1.0) < 1e-15);
    CHECK(std::abs(angular_distance(a.values, m.values) - eps / 2) < 1e-15);
    const auto anti = vec({-1, 1e-9, 0}, LatentKind::spherical);
    CHECK_THROWS_AS(slerp(a, project(anti.space, anti.values), 1, 2), AntipodalPoints);
    CHECK_THROWS_AS(slerp(vec({2, 0}, LatentKind::normal), vec({0, 1}, LatentKind::normal), 1, 2), SpaceError);
}

TEST_CASE("interpolate dispatches on the space") {
    Rng rng(9);
    const auto a = on_sphere(rng, 4), b = on_sphere(rng, 4);
    CHECK(interpolate(a, b, 1, 3).values == slerp(a, b, 1, 3).values);
    const auto c = vec({1, 2}, LatentKind::uniform), d = vec({0, 0}, LatentKind::uniform);
    CHECK(interpolate(c, d, 1, 2).values == lerp(c, d, 1, 2).values);
}

TEST_CASE("angular distance special cases") {
    const auto z = std::vector<double>{0.6, 0.8};
    CHECK(angular_distance(z, z) == 0.0);
    CHECK(angular_distance(z, std::vector<double>{-0.6, -0.8}) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
    CHECK(angular_distance(std::vector<double>{1, 0, 0}, std::vector<double>{0, 1, 0}) ==
          doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
}

TEST_CASE("slerp invariants on random pairs") {
    Rng rng(10);
    for (std::size_t d : {2u, 8u, 32u}) {
        for (int i = 0; i < 300; ++i) {
            const auto a = on_sphere(rng, d), b = on_sphere(rng, d);
            const double theta = angular_distance(a.values, b.values);
            const int T = 1 + static_cast<int>(rng() % 50);
            for (int t = 0; t <= T; ++t) {
                const auto z = slerp(a, b, t, T);
                CHECK(std::abs(norm(z.values) - 1.0) < 1e-9);
                CHECK(std::abs(angular_distance(a.values, z.values) - theta * t / T) < 1e-9);
                const auto r = slerp(b, a, T - t, T);
                for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(z.values[j] - r.values[j]) < 1e-12);
            }
        }
    }
}
