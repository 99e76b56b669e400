#include "appp/body_model.hpp"

#include "appp/errors.hpp"
#include "appp/hash.hpp"
#include "appp/rng.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <numbers>

namespace appp {

bool PoseVector::valid() const {
    if (values.size() % 3 != 0) return false;
    for (double v : values) {
        if (!std::isfinite(v) || std::abs(v) > std::numbers::pi) return false;
    }
    return true;
}

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

namespace {

// R = I + a [v]x + b [v]x^2 with a = sin(t)/t, b = (1 - cos t)/t^2.
struct RodriguesCoeffs {
    double a, b, da, db; // da = a'(t)/t, db = b'(t)/t
};

RodriguesCoeffs rodrigues_coeffs(double theta) {
    const double t2 = theta * theta;
    if (theta < 1e-3) {
        return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, -1.0 / 3.0 + t2 / 30.0,
                -1.0 / 12.0 + t2 / 180.0};
    }
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    return {s / theta, (1.0 - c) / t2, (theta * c - s) / (t2 * theta), (theta * s - 2.0 * (1.0 - c)) / (t2 * t2)};
}

} // namespace

Mat3 rodrigues(const Vec3& v) {
    const auto k = rodrigues_coeffs(v.norm());
    const Mat3 K = skew(v);
    return Mat3::Identity() + k.a * K + k.b * (K * K);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& v) {
    const auto k = rodrigues_coeffs(v.norm());
    const Mat3 K = skew(v);
    const Mat3 K2 = K * K;
    std::array<Mat3, 3> d;
    for (int i = 0; i < 3; ++i) {
        const Mat3 E = skew(Vec3::Unit(i));
        d[static_cast<std::size_t>(i)] = k.a * E + k.b * (E * K + K * E) + (k.da * v[i]) * K + (k.db * v[i]) * K2;
    }
    return d;
}

std::vector<Vec3> KinematicTree::rest_joints() const {
    std::vector<Vec3> j(node_count(), Vec3::Zero());
    for (std::size_t k = 1; k < node_count(); ++k) {
        j[k] = j[static_cast<std::size_t>(parent[k])] + rest_offsets[k];
    }
    return j;
}

void KinematicTree::validate() const {
    const std::size_t n = node_count();
    if (n < 2) throw ShapeError("KinematicTree: needs a root and at least one joint");
    if (names.size() != n || rest_offsets.size() != n) throw ShapeError("KinematicTree: per-node arrays disagree");
    if (parent[0] != -1) throw ConfigError("KinematicTree: node 0 must be the root");
    for (std::size_t k = 1; k < n; ++k) {
        if (parent[k] < 0 || static_cast<std::size_t>(parent[k]) >= k) {
            throw ConfigError("KinematicTree: parent of node " + std::to_string(k) + " must precede it");
        }
        if (!(rest_offsets[k].norm() > 0.0)) throw ConfigError("KinematicTree: zero-length bone at " + names[k]);
    }
    if (skin.size() != vertex_count()) throw ShapeError("KinematicTree: skin rows != vertex count");
    for (const auto& row : skin) {
        if (row.empty() || row.size() > 4) throw ConfigError("KinematicTree: each vertex needs 1..4 influences");
        double s = 0.0;
        for (const auto& inf : row) {
            if (inf.node >= n) throw ConfigError("KinematicTree: skin influence names a missing node");
            s += inf.weight;
        }
        if (std::abs(s - 1.0) > 1e-12) throw ConfigError("KinematicTree: skin weights must sum to 1");
    }
    if (shape_basis.rows() != 3 * vertex_count()) throw ShapeError("KinematicTree: shape basis rows != 3V");
}

std::string KinematicTree::fingerprint() const {
    Hasher h;
    for (std::size_t k = 0; k < node_count(); ++k) {
        h.str(names[k]).u64(static_cast<std::uint64_t>(parent[k] + 1));
        h.f64(rest_offsets[k].x()).f64(rest_offsets[k].y()).f64(rest_offsets[k].z());
    }
    for (const auto& v : rest_vertices) h.f64(v.x()).f64(v.y()).f64(v.z());
    for (const auto& row : skin) {
        for (const auto& inf : row) h.u64(inf.node).f64(inf.weight);
    }
    h.u64(shape_basis.rows()).u64(shape_basis.cols()).reals(shape_basis.values());
    return h.hex();
}

KinematicTree build_body(const BodyConfig& config) {
    struct NodeDef {
        const char* name;
        int parent;
        double x, y, z;
        double radius;
    };
    // SMPL-H body ordering, y up, body facing +z.
    static constexpr NodeDef defs[] = {
        {"pelvis", -1, 0.0, 0.0, 0.0, 0.0},
        {"left_hip", 0, 0.09, -0.08, 0.0, 0.07},
        {"right_hip", 0, -0.09, -0.08, 0.0, 0.07},
        {"spine1", 0, 0.0, 0.11, -0.01, 0.12},
        {"left_knee", 1, 0.01, -0.38, 0.0, 0.07},
        {"right_knee", 2, -0.01, -0.38, 0.0, 0.07},
        {"spine2", 3, 0.0, 0.13, 0.0, 0.13},
        {"left_ankle", 4, 0.0, -0.40, -0.03, 0.05},
        {"right_ankle", 5, 0.0, -0.40, -0.03, 0.05},
        {"spine3", 6, 0.0, 0.06, 0.02, 0.14},
        {"left_foot", 7, 0.02, -0.06, 0.12, 0.04},
        {"right_foot", 8, -0.02, -0.06, 0.12, 0.04},
        {"neck", 9, 0.0, 0.21, -0.03, 0.07},
        {"left_collar", 9, 0.07, 0.12, -0.01, 0.06},
        {"right_collar", 9, -0.07, 0.12, -0.01, 0.06},
        {"head", 12, 0.0, 0.09, 0.05, 0.05},
        {"left_shoulder", 13, 0.11, 0.03, -0.01, 0.06},
        {"right_shoulder", 14, -0.11, 0.03, -0.01, 0.06},
        {"left_elbow", 16, 0.26, 0.0, -0.02, 0.045},
        {"right_elbow", 17, -0.26, 0.0, -0.02, 0.045},
        {"left_wrist", 18, 0.25, 0.01, 0.0, 0.035},
        {"right_wrist", 19, -0.25, 0.01, 0.0, 0.035},
    };
    if (config.vertices_per_bone == 0) throw ConfigError("build_body: vertices_per_bone must be positive");
    Rng rng(derive_seed(config.seed, "body"));

    KinematicTree tree;
    std::vector<double> radius;
    for (const auto& d : defs) {
        tree.names.emplace_back(d.name);
        tree.parent.push_back(d.parent);
        // Up to 5% seeded variation in bone geometry.
        const double scale = d.parent < 0 ? 1.0 : 1.0 + 0.05 * uniform(rng, -1.0, 1.0);
        tree.rest_offsets.emplace_back(scale * d.x, scale * d.y, scale * d.z);
        radius.push_back(d.radius * (1.0 + 0.1 * uniform(rng, -1.0, 1.0)));
    }
    const auto joints = tree.rest_joints();
    const std::size_t per_bone = config.vertices_per_bone;

    for (std::size_t c = 1; c < tree.node_count(); ++c) {
        const auto p = static_cast<std::size_t>(tree.parent[c]);
        const Vec3 axis = tree.rest_offsets[c].normalized();
        Vec3 helper = std::abs(axis.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
        const Vec3 u = axis.cross(helper).normalized();
        const Vec3 w = axis.cross(u);
        for (std::size_t j = 0; j < per_bone; ++j) {
            const double s = (static_cast<double>(j) + 0.5) / static_cast<double>(per_bone);
            const double phi = 2.0 * std::numbers::pi * static_cast<double>(3 * j) / static_cast<double>(per_bone);
            const Vec3 pos = joints[p] + s * tree.rest_offsets[c] + radius[c] * (std::cos(phi) * u + std::sin(phi) * w);
            tree.rest_vertices.push_back(pos);

            std::vector<SkinInfluence> row;
            double w_grand = 0.0;
            double w_child = 0.0;
            if (s < 0.3 && tree.parent[p] >= 0) w_grand = 0.3 - s;
            if (s > 0.7) w_child = s - 0.7;
            row.push_back({static_cast<std::uint32_t>(p), 1.0 - w_grand - w_child});
            if (w_grand > 0.0) row.push_back({static_cast<std::uint32_t>(tree.parent[p]), w_grand});
            if (w_child > 0.0) row.push_back({static_cast<std::uint32_t>(c), w_child});
            double sum = 0.0;
            for (const auto& inf : row) sum += inf.weight;
            row.front().weight += 1.0 - sum;
            tree.skin.push_back(std::move(row));
        }
    }

    // Orthonormal shape basis from a seeded Gaussian matrix (modified Gram-Schmidt).
    const std::size_t rows = 3 * tree.vertex_count();
    const std::size_t b = config.shape_dim;
    tree.shape_basis = Tensor2(rows, b);
    Rng srng(derive_seed(config.seed, "shape-basis"));
    for (std::size_t col = 0; col < b; ++col) {
        std::vector<double> v(rows);
        for (auto& e : v) e = standard_normal(srng);
        for (std::size_t prev = 0; prev < col; ++prev) {
            double dot = 0.0;
            for (std::size_t r = 0; r < rows; ++r) dot += v[r] * tree.shape_basis(r, prev);
            for (std::size_t r = 0; r < rows; ++r) v[r] -= dot * tree.shape_basis(r, prev);
        }
        double norm = 0.0;
        for (double e : v) norm += e * e;
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < rows; ++r) tree.shape_basis(r, col) = v[r] / norm;
    }
    tree.validate();
    return tree;
}

namespace {

void check_pose(const KinematicTree& tree, const PoseVector& pose) {
    if (pose.values.size() != 3 * tree.joint_count()) {
        throw ShapeError("pose has " + std::to_string(pose.values.size()) + " values, body expects " +
                         std::to_string(3 * tree.joint_count()));
    }
}

void check_shape(const KinematicTree& tree, const ShapeVector& shape) {
    if (shape.values.size() != tree.shape_dim()) {
        throw ShapeError("shape has " + std::to_string(shape.values.size()) + " values, body expects " +
                         std::to_string(tree.shape_dim()));
    }
}

Vec3 shaped_vertex(const KinematicTree& tree, const ShapeVector& shape, std::size_t v) {
    Vec3 x = tree.rest_vertices[v];
    for (std::size_t j = 0; j < shape.values.size(); ++j) {
        const double bj = shape.values[j];
        if (bj == 0.0) continue;
        x.x() += tree.shape_basis(3 * v, j) * bj;
        x.y() += tree.shape_basis(3 * v + 1, j) * bj;
        x.z() += tree.shape_basis(3 * v + 2, j) * bj;
    }
    return x;
}

} // namespace

PosedSkeleton forward_kinematics(const KinematicTree& tree, const PoseVector& pose, const Vec3& root_orient) {
    check_pose(tree, pose);
    const std::size_t n = tree.node_count();
    PosedSkeleton s;
    s.local.resize(n);
    s.world.resize(n);
    s.joints.resize(n);
    s.local[0] = rodrigues(root_orient);
    s.world[0] = s.local[0];
    s.joints[0] = Vec3::Zero();
    for (std::size_t k = 1; k < n; ++k) {
        const auto p = static_cast<std::size_t>(tree.parent[k]);
        s.local[k] = rodrigues(pose.joint(k - 1));
        s.world[k] = s.world[p] * s.local[k];
        s.joints[k] = s.joints[p] + s.world[p] * tree.rest_offsets[k];
    }
    return s;
}

Tensor2 pose_joints(const KinematicTree& tree, const PoseVector& pose, const Vec3& root_orient) {
    const auto s = forward_kinematics(tree, pose, root_orient);
    Tensor2 j(tree.node_count(), 3);
    for (std::size_t k = 0; k < tree.node_count(); ++k) {
        for (int c = 0; c < 3; ++c) j(k, static_cast<std::size_t>(c)) = s.joints[k][c];
    }
    return j;
}

BodyMesh skin(const KinematicTree& tree, const PoseVector& pose, const ShapeVector& shape, const Vec3& root_orient) {
    check_shape(tree, shape);
    const auto s = forward_kinematics(tree, pose, root_orient);
    const auto rest = tree.rest_joints();
    BodyMesh mesh{Tensor2(tree.vertex_count(), 3), Tensor2(tree.node_count(), 3)};
    for (std::size_t v = 0; v < tree.vertex_count(); ++v) {
        const Vec3 x = shaped_vertex(tree, shape, v);
        Vec3 out = Vec3::Zero();
        for (const auto& inf : tree.skin[v]) {
            out += inf.weight * (s.world[inf.node] * (x - rest[inf.node]) + s.joints[inf.node]);
        }
        for (int c = 0; c < 3; ++c) mesh.vertices(v, static_cast<std::size_t>(c)) = out[c];
    }
    for (std::size_t k = 0; k < tree.node_count(); ++k) {
        for (int c = 0; c < 3; ++c) mesh.joints(k, static_cast<std::size_t>(c)) = s.joints[k][c];
    }
    return mesh;
}

std::vector<double> skin_pose_vjp(const KinematicTree& tree, const PoseVector& pose, const ShapeVector& shape,
                                  const Tensor2& grad_vertices, const Tensor2& grad_joints, const Vec3& root_orient) {
    check_shape(tree, shape);
    const auto s = forward_kinematics(tree, pose, root_orient);
    const std::size_t n = tree.node_count();
    std::vector<Mat3> g_world(n, Mat3::Zero());
    std::vector<Vec3> g_joint(n, Vec3::Zero());

    if (!grad_vertices.empty()) {
        if (grad_vertices.rows() != tree.vertex_count() || grad_vertices.cols() != 3) {
            throw ShapeError("skin_pose_vjp: vertex gradient must be V x 3");
        }
        const auto rest = tree.rest_joints();
        for (std::size_t v = 0; v < tree.vertex_count(); ++v) {
            const Vec3 gv(grad_vertices(v, 0), grad_vertices(v, 1), grad_vertices(v, 2));
            if (gv.isZero(0.0)) continue;
            const Vec3 x = shaped_vertex(tree, shape, v);
            for (const auto& inf : tree.skin[v]) {
                g_world[inf.node].noalias() += inf.weight * gv * (x - rest[inf.node]).transpose();
                g_joint[inf.node] += inf.weight * gv;
            }
        }
    }
    if (!grad_joints.empty()) {
        if (grad_joints.rows() != n || grad_joints.cols() != 3) throw ShapeError("skin_pose_vjp: joint gradient must be (K+1) x 3");
        for (std::size_t k = 0; k < n; ++k) g_joint[k] += Vec3(grad_joints(k, 0), grad_joints(k, 1), grad_joints(k, 2));
    }

    std::vector<double> g_pose(3 * tree.joint_count(), 0.0);
    for (std::size_t k = n; k-- > 1;) {
        const auto p = static_cast<std::size_t>(tree.parent[k]);
        // joints[k] = joints[p] + world[p] * offset[k]
        g_joint[p] += g_joint[k];
        g_world[p].noalias() += g_joint[k] * tree.rest_offsets[k].transpose();
        // world[k] = world[p] * local[k]
        g_world[p].noalias() += g_world[k] * s.local[k].transpose();
        const Mat3 g_local = s.world[p].transpose() * g_world[k];
        const auto dR = rodrigues_jacobian(pose.joint(k - 1));
        for (std::size_t i = 0; i < 3; ++i) g_pose[3 * (k - 1) + i] = (g_local.array() * dR[i].array()).sum();
    }
    return g_pose;
}

double vertex_distance_mm(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() % 3 != 0 || a.empty()) {
        throw ShapeError("mesh_distance: meshes must share a non-empty vertex set");
    }
    const std::size_t nv = a.size() / 3;
    double sum = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
        const double dx = 1000.0 * (a[3 * v] - b[3 * v]);
        const double dy = 1000.0 * (a[3 * v + 1] - b[3 * v + 1]);
        const double dz = 1000.0 * (a[3 * v + 2] - b[3 * v + 2]);
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return sum / static_cast<double>(nv);
}

double mesh_distance(const BodyMesh& a, const BodyMesh& b) {
    if (a.vertices.cols() != 3 || b.vertices.cols() != 3) throw ShapeError("mesh_distance: vertices must be V x 3");
    return vertex_distance_mm(a.vertices.values(), b.vertices.values());
}

void Camera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("Camera: focal lengths must be positive");
    if (!(rotation.transpose() * rotation - Mat3::Identity()).isZero(1e-9) ||
        std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw ConfigError("Camera: rotation must be orthonormal with det +1");
    }
}

Camera Camera::frontal(double distance) {
    Camera cam;
    // 180 degrees about x: the camera looks down -z at a body facing +z, image v grows downward.
    cam.rotation = Vec3(1.0, -1.0, -1.0).asDiagonal();
    cam.translation = Vec3(0.0, 0.0, distance);
    return cam;
}

std::size_t Keypoints2D::visible_count() const {
    std::size_t n = 0;
    for (char v : visible) n += v ? 1 : 0;
    return n;
}

Keypoints2D project_points(const Camera& camera, const Tensor2& points) {
    if (points.cols() != 3) throw ShapeError("project: points must be N x 3");
    Keypoints2D kp{Tensor2(points.rows(), 2), std::vector<char>(points.rows(), 1)};
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const Vec3 x = camera.rotation * Vec3(points(i, 0), points(i, 1), points(i, 2)) + camera.translation;
        if (!(x.z() > 0.0)) {
            throw ProjectionError("project: point " + std::to_string(i) + " is at or behind the camera plane");
        }
        kp.points(i, 0) = camera.fx * x.x() / x.z() + camera.cx;
        kp.points(i, 1) = camera.fy * x.y() / x.z() + camera.cy;
    }
    return kp;
}

Keypoints2D project(const Camera& camera, const BodyMesh& mesh) { return project_points(camera, mesh.joints); }

Tensor2 project_points_vjp(const Camera& camera, const Tensor2& points, const Tensor2& grad_uv) {
    if (grad_uv.rows() != points.rows() || grad_uv.cols() != 2) throw ShapeError("project_points_vjp: shape mismatch");
    Tensor2 g(points.rows(), 3);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const Vec3 x = camera.rotation * Vec3(points(i, 0), points(i, 1), points(i, 2)) + camera.translation;
        if (!(x.z() > 0.0)) throw ProjectionError("project: point behind the camera plane");
        const double iz = 1.0 / x.z();
        const double gu = grad_uv(i, 0);
        const double gv = grad_uv(i, 1);
        const Vec3 gcam(camera.fx * gu * iz, camera.fy * gv * iz,
                        -(camera.fx * gu * x.x() + camera.fy * gv * x.y()) * iz * iz);
        const Vec3 gw = camera.rotation.transpose() * gcam;
        for (int c = 0; c < 3; ++c) g(i, static_cast<std::size_t>(c)) = gw[c];
    }
    return g;
}

} // namespace appp
