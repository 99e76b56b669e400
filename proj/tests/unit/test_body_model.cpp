#include "doctest.h"
#include "support.hpp"

#include "appp/body_model.hpp"
#include "appp/errors.hpp"
#include "appp/optim.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

using namespace appp;
using appp::test::random_pose;

namespace {

const KinematicTree& body() {
    static const KinematicTree tree = build_body();
    return tree;
}

Vec3 random_vec(Rng& rng, double scale) {
    return {scale * standard_normal(rng), scale * standard_normal(rng), scale * standard_normal(rng)};
}

Mat3 quaternion_rotation(const Vec3& v) {
    const double angle = v.norm();
    if (angle == 0.0) return Mat3::Identity();
    const Vec3 axis = v / angle;
    const Eigen::Quaterniond q(std::cos(angle / 2), axis.x() * std::sin(angle / 2), axis.y() * std::sin(angle / 2),
                               axis.z() * std::sin(angle / 2));
    return q.toRotationMatrix();
}

} // namespace

TEST_CASE("rodrigues: identity and quarter turn") {
    CHECK(rodrigues(Vec3::Zero()).isApprox(Mat3::Identity(), 0.0));
    const Vec3 y = rodrigues(Vec3(std::numbers::pi / 2, 0, 0)) * Vec3(0, 1, 0);
    CHECK((y - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("rodrigues matches a quaternion construction") {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const Vec3 v = random_vec(rng, 1.2);
        CHECK((rodrigues(v) - quaternion_rotation(v)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("rodrigues is a rotation, including tiny angles") {
    Rng rng(2);
    for (double scale : {1e-14, 1e-9, 1e-4, 1e-3, 0.5, 3.0}) {
        for (int i = 0; i < 50; ++i) {
            const Mat3 R = rodrigues(random_vec(rng, scale));
            CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
            CHECK(std::abs(R.determinant() - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("rodrigues jacobian agrees with finite differences") {
    Rng rng(3);
    for (double scale : {1e-4, 0.3, 1.5}) {
        for (int i = 0; i < 10; ++i) {
            const Vec3 v = random_vec(rng, scale);
            const auto J = rodrigues_jacobian(v);
            for (int k = 0; k < 3; ++k) {
                const double h = 1e-6;
                const Mat3 num = (rodrigues(v + h * Vec3::Unit(k)) - rodrigues(v - h * Vec3::Unit(k))) / (2 * h);
                CHECK((num - J[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() < 1e-7);
            }
        }
    }
}

TEST_CASE("default body layout") {
    const auto& t = body();
    CHECK(t.node_count() == 22);
    CHECK(t.joint_count() == 21);
    CHECK(t.vertex_count() == 210);
    CHECK(t.shape_dim() == 10);
    CHECK(t.parent[0] == -1);
    CHECK_NOTHROW(t.validate());
    for (std::size_t k = 1; k < t.node_count(); ++k) {
        CHECK(t.parent[k] >= 0);
        CHECK(static_cast<std::size_t>(t.parent[k]) < k);
        CHECK(t.rest_offsets[k].norm() > 0.0);
    }
    for (const auto& s : t.skin) {
        CHECK(s.size() <= 4);
        double w = 0.0;
        for (const auto& inf : s) w += inf.weight;
        CHECK(std::abs(w - 1.0) < 1e-12);
    }
    CHECK(build_body().fingerprint() == t.fingerprint());
    CHECK(build_body({5}).fingerprint() != t.fingerprint());
}

TEST_CASE("body validation catches broken invariants") {
    KinematicTree t = body();
    t.skin[3][0].weight += 0.1;
    CHECK_THROWS(t.validate());
    t = body();
    t.parent[4] = 7;
    CHECK_THROWS(t.validate());
    t = body();
    t.rest_offsets[2] = Vec3::Zero();
    CHECK_THROWS(t.validate());
}

TEST_CASE("forward kinematics: zero pose gives cumulative rest offsets") {
    const auto& t = body();
    const auto s = forward_kinematics(t, PoseVector::zeros(21));
    std::vector<Vec3> cum(t.node_count(), Vec3::Zero());
    for (std::size_t k = 1; k < t.node_count(); ++k) cum[k] = cum[static_cast<std::size_t>(t.parent[k])] + t.rest_offsets[k];
    for (std::size_t k = 0; k < t.node_count(); ++k) CHECK((s.joints[k] - cum[k]).norm() < 1e-15);
}

TEST_CASE("forward kinematics: root rotation acts rigidly") {
    const auto& t = body();
    Rng rng(4);
    const PoseVector pose = random_pose(rng, 21);
    const Vec3 root = random_vec(rng, 0.8);
    const Mat3 R = rodrigues(root);
    const auto a = forward_kinematics(t, pose);
    const auto b = forward_kinematics(t, pose, root);
    for (std::size_t k = 0; k < t.node_count(); ++k) CHECK((b.joints[k] - R * a.joints[k]).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches a direct chain recomputation and keeps bone lengths") {
    const auto& t = body();
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const PoseVector pose = random_pose(rng, 21, 1.0);
        const auto s = forward_kinematics(t, pose);
        for (std::size_t k = 1; k < t.node_count(); ++k) {
            // walk the chain from the root to k
            std::vector<std::size_t> chain;
            for (int n = static_cast<int>(k); n > 0; n = t.parent[static_cast<std::size_t>(n)]) chain.push_back(static_cast<std::size_t>(n));
            Mat3 W = Mat3::Identity();
            Vec3 p = Vec3::Zero();
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                p += W * t.rest_offsets[*it];
                W = W * quaternion_rotation(pose.joint(*it - 1));
            }
            CHECK((s.joints[k] - p).norm() < 1e-10);
            const auto par = static_cast<std::size_t>(t.parent[k]);
            CHECK(std::abs((s.joints[k] - s.joints[par]).norm() - t.rest_offsets[k].norm()) < 1e-10);
        }
    }
    CHECK_THROWS_AS(forward_kinematics(t, PoseVector::zeros(20)), ShapeError);
}

TEST_CASE("skin: rest pose is unchanged") {
    const auto& t = body();
    const auto m = skin(t, PoseVector::zeros(21), ShapeVector::zeros(10));
    for (std::size_t v = 0; v < t.vertex_count(); ++v) {
        for (int c = 0; c < 3; ++c) CHECK(std::abs(m.vertices(v, static_cast<std::size_t>(c)) - t.rest_vertices[v][c]) < 1e-15);
    }
}

TEST_CASE("skin: explicit per-vertex weighted sum") {
    const auto& t = body();
    Rng rng(6);
    const PoseVector pose = random_pose(rng, 21, 0.8);
    const ShapeVector shape(test::normal_vector(rng, 10));
    const auto m = skin(t, pose, shape);
    const auto s = forward_kinematics(t, pose);
    const auto rest = t.rest_joints();
    for (std::size_t v = 0; v < t.vertex_count(); ++v) {
        Vec3 x = t.rest_vertices[v];
        for (std::size_t j = 0; j < 10; ++j) {
            for (std::size_t c = 0; c < 3; ++c) x[static_cast<int>(c)] += t.shape_basis(3 * v + c, j) * shape.values[j];
        }
        Vec3 want = Vec3::Zero();
        double rigid_weight = 0.0;
        for (const auto& inf : t.skin[v]) {
            // homogeneous 4x4 transform of node k, applied to x
            Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
            T.block<3, 3>(0, 0) = s.world[inf.node];
            T.block<3, 1>(0, 3) = s.joints[inf.node] - s.world[inf.node] * rest[inf.node];
            want += inf.weight * (T * x.homogeneous()).head<3>();
            rigid_weight = std::max(rigid_weight, inf.weight);
        }
        for (int c = 0; c < 3; ++c) CHECK(std::abs(m.vertices(v, static_cast<std::size_t>(c)) - want[c]) < 1e-12);
    }
}

TEST_CASE("skin: a fully weighted vertex moves rigidly with its joint") {
    const auto& t = body();
    Rng rng(7);
    const PoseVector pose = random_pose(rng, 21, 0.8);
    const auto m = skin(t, pose, ShapeVector::zeros(10));
    const auto s = forward_kinematics(t, pose);
    const auto rest = t.rest_joints();
    std::size_t checked = 0;
    for (std::size_t v = 0; v < t.vertex_count(); ++v) {
        if (t.skin[v].size() != 1) continue;
        const auto k = t.skin[v][0].node;
        const Vec3 want = s.world[k] * (t.rest_vertices[v] - rest[k]) + s.joints[k];
        CHECK((Vec3(m.vertices(v, 0), m.vertices(v, 1), m.vertices(v, 2)) - want).norm() < 1e-12);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("skin is affine in the shape coefficients") {
    const auto& t = body();
    Rng rng(8);
    for (int i = 0; i < 10; ++i) {
        const PoseVector pose = random_pose(rng, 21);
        const ShapeVector b1(test::normal_vector(rng, 10)), b2(test::normal_vector(rng, 10));
        const double a = uniform(rng, -1, 2);
        std::vector<double> mix(10);
        for (std::size_t j = 0; j < 10; ++j) mix[j] = a * b1.values[j] + (1 - a) * b2.values[j];
        const auto m1 = skin(t, pose, b1), m2 = skin(t, pose, b2), mm = skin(t, pose, ShapeVector(mix));
        for (std::size_t k = 0; k < mm.vertices.size(); ++k) {
            CHECK(std::abs(mm.vertices.values()[k] - (a * m1.vertices.values()[k] + (1 - a) * m2.vertices.values()[k])) < 1e-10);
        }
    }
    CHECK_THROWS_AS(skin(t, PoseVector::zeros(21), ShapeVector::zeros(9)), ShapeError);
}

TEST_CASE("skin pose gradient agrees with finite differences") {
    const auto& t = body();
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor2 wv = test::normal_tensor(rng, t.vertex_count(), 3);
        const Tensor2 wj = test::normal_tensor(rng, t.node_count(), 3);
        const Vec3 root = random_vec(rng, 0.5);
        const ShapeVector shape(test::normal_vector(rng, 10, 0.5));
        ScalarFunction f = [&](std::span<const double> p, std::span<double> g) {
            const PoseVector pose(std::vector<double>(p.begin(), p.end()));
            const auto m = skin(t, pose, shape, root);
            double s = 0.0;
            for (std::size_t i = 0; i < wv.size(); ++i) s += wv.values()[i] * m.vertices.values()[i];
            for (std::size_t i = 0; i < wj.size(); ++i) s += wj.values()[i] * m.joints.values()[i];
            if (!g.empty()) {
                const auto gp = skin_pose_vjp(t, pose, shape, wv, wj, root);
                std::copy(gp.begin(), gp.end(), g.begin());
            }
            return s;
        };
        CHECK(grad_check(f, random_pose(rng, 21, 0.7).values, 1e-4).passed);
    }
}

TEST_CASE("mesh distance: identity, 3-4-5 translation and loop oracle") {
    const auto& t = body();
    Rng rng(10);
    const auto a = skin(t, random_pose(rng, 21), ShapeVector::zeros(10));
    CHECK(mesh_distance(a, a) == 0.0);
    BodyMesh b = a;
    for (std::size_t v = 0; v < t.vertex_count(); ++v) {
        b.vertices(v, 0) += 0.003;
        b.vertices(v, 2) += 0.004;
    }
    CHECK(mesh_distance(a, b) == doctest::Approx(5.0).epsilon(1e-9));
    const auto c = skin(t, random_pose(rng, 21), ShapeVector::zeros(10));
    double loop = 0.0;
    for (std::size_t v = 0; v < t.vertex_count(); ++v) {
        loop += std::hypot(a.vertices(v, 0) - c.vertices(v, 0), a.vertices(v, 1) - c.vertices(v, 1),
                           a.vertices(v, 2) - c.vertices(v, 2));
    }
    CHECK(std::abs(mesh_distance(a, c) - 1000.0 * loop / 210.0) < 1e-9);
    BodyMesh short_mesh{Tensor2(3, 3), Tensor2()};
    CHECK_THROWS_AS(mesh_distance(a, short_mesh), ShapeError);
}

TEST_CASE("projection: optical axis, similar triangles, matrix oracle") {
    Camera cam;
    Tensor2 p(1, 3, std::vector<double>{0, 0, 2.5});
    auto kp = project_points(cam, p);
    CHECK(kp.points(0, 0) == 500.0);
    CHECK(kp.points(0, 1) == 500.0);

    const auto near = project_points(cam, Tensor2(1, 3, std::vector<double>{0.2, -0.1, 1.0}));
    const auto far = project_points(cam, Tensor2(1, 3, std::vector<double>{0.2, -0.1, 2.0}));
    CHECK(far.points(0, 0) - 500 == doctest::Approx((near.points(0, 0) - 500) / 2));
    CHECK(far.points(0, 1) - 500 == doctest::Approx((near.points(0, 1) - 500) / 2));

    CHECK_THROWS_AS(project_points(cam, Tensor2(1, 3, std::vector<double>{0, 0, 0})), ProjectionError);
    CHECK_THROWS_AS(project_points(cam, Tensor2(1, 3, std::vector<double>{0, 0, -1})), ProjectionError);

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Camera c;
        c.fx = uniform(rng, 500, 1500);
        c.fy = uniform(rng, 500, 1500);
        c.cx = uniform(rng, 200, 800);
        c.cy = uniform(rng, 200, 800);
        c.rotation = quaternion_rotation(random_vec(rng, 0.2));
        c.translation = Vec3(0.1 * standard_normal(rng), 0.1 * standard_normal(rng), 5.0);
        Eigen::Matrix<double, 3, 4> P;
        Eigen::Matrix3d Kmat;
        Kmat << c.fx, 0, c.cx, 0, c.fy, c.cy, 0, 0, 1;
        P.block<3, 3>(0, 0) = c.rotation;
        P.block<3, 1>(0, 3) = c.translation;
        P = Kmat * P;
        const Tensor2 pts = test::normal_tensor(rng, 10, 3, 0.5);
        const auto got = project_points(c, pts);
        for (std::size_t i = 0; i < 10; ++i) {
            const Eigen::Vector3d h = P * Eigen::Vector4d(pts(i, 0), pts(i, 1), pts(i, 2), 1.0);
            CHECK(std::abs(got.points(i, 0) - h.x() / h.z()) < 1e-9);
            CHECK(std::abs(got.points(i, 1) - h.y() / h.z()) < 1e-9);
        }
    }
}

TEST_CASE("projection is invariant under a common rigid motion") {
    Rng rng(12);
    const auto& t = body();
    for (int trial = 0; trial < 20; ++trial) {
        const auto mesh = skin(t, random_pose(rng, 21), ShapeVector::zeros(10));
        const Camera cam = Camera::frontal(3.0);
        const Mat3 Q = rodrigues(random_vec(rng, 1.0));
        const Vec3 s = random_vec(rng, 1.0);
        BodyMesh moved = mesh;
        for (std::size_t k = 0; k < mesh.joints.rows(); ++k) {
            const Vec3 x = Q * Vec3(mesh.joints(k, 0), mesh.joints(k, 1), mesh.joints(k, 2)) + s;
            for (int c = 0; c < 3; ++c) moved.joints(k, static_cast<std::size_t>(c)) = x[c];
        }
        Camera cam2 = cam;
        cam2.rotation = cam.rotation * Q.transpose();
        cam2.translation = cam.translation - cam2.rotation * s;
        const auto a = project(cam, mesh), b = project(cam2, moved);
        for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(std::abs(a.points.values()[i] - b.points.values()[i]) < 1e-9);
    }
}

TEST_CASE("projection gradient agrees with finite differences") {
    Rng rng(13);
    const Camera cam = Camera::frontal(3.0);
    const Tensor2 w = test::normal_tensor(rng, 6, 2);
    ScalarFunction f = [&](std::span<const double> x, std::span<double> g) {
        const Tensor2 pts(6, 3, std::vector<double>(x.begin(), x.end()));
        const auto kp = project_points(cam, pts);
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w.values()[i] * kp.points.values()[i];
        if (!g.empty()) {
            const auto gp = project_points_vjp(cam, pts, w);
            std::copy(gp.values().begin(), gp.values().end(), g.begin());
        }
        return s;
    };
    CHECK(grad_check(f, test::normal_vector(rng, 18, 0.3), 1e-4).passed);
}

TEST_CASE("camera validation") {
    Camera c;
    CHECK_NOTHROW(c.validate());
    c.fx = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = Camera();
    c.rotation(0, 0) = -1; // det -1
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("body JSON round trip") {
    const auto& t = body();
    const std::string text = body_to_json(t);
    const KinematicTree back = body_from_json(text);
    CHECK(back.fingerprint() == t.fingerprint());
    CHECK(body_to_json(back) == text);
    CHECK_THROWS_AS(body_from_json("{"), ParseError);
    std::string v2 = text;
    const auto pos = v2.find("\"format_version\":1");
    REQUIRE(pos != std::string::npos);
    v2.replace(pos, 18, "\"format_version\":2");
    CHECK_THROWS_AS(body_from_json(v2), VersionError);
}
