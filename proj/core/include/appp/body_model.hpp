#pragma once

#include "appp/tensor.hpp"

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace appp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// K axis-angle triples (radians), one per articulated joint. Root orientation is not part of it.
struct PoseVector {
    std::vector<double> values;

    PoseVector() = default;
    explicit PoseVector(std::vector<double> v) : values(std::move(v)) {}
    static PoseVector zeros(std::size_t joints) { return PoseVector(std::vector<double>(3 * joints, 0.0)); }

    std::size_t joint_count() const { return values.size() / 3; }
    Vec3 joint(std::size_t k) const { return {values[3 * k], values[3 * k + 1], values[3 * k + 2]}; }
    /// Length is a multiple of 3, finite, every component in [-pi, pi].
    bool valid() const;

    friend bool operator==(const PoseVector&, const PoseVector&) = default;
};

struct ShapeVector {
    std::vector<double> values;

    ShapeVector() = default;
    explicit ShapeVector(std::vector<double> v) : values(std::move(v)) {}
    static ShapeVector zeros(std::size_t dim) { return ShapeVector(std::vector<double>(dim, 0.0)); }

    friend bool operator==(const ShapeVector&, const ShapeVector&) = default;
};

struct SkinInfluence {
    std::uint32_t node = 0;
    double weight = 0.0;

    friend bool operator==(const SkinInfluence&, const SkinInfluence&) = default;
};

/// Articulated body: node 0 is the pelvis root, nodes 1..K are the posed joints.
/// Parents always precede children.
struct KinematicTree {
    std::vector<std::string> names;
    std::vector<int> parent;          // parent[0] == -1
    std::vector<Vec3> rest_offsets;   // node position relative to parent, meters
    std::vector<Vec3> rest_vertices;  // meters
    std::vector<std::vector<SkinInfluence>> skin; // per vertex, <= 4 influences summing to 1
    Tensor2 shape_basis;              // (3V) x B, vertex-major

    std::size_t node_count() const { return parent.size(); }
    std::size_t joint_count() const { return parent.size() - 1; }
    std::size_t vertex_count() const { return rest_vertices.size(); }
    std::size_t shape_dim() const { return shape_basis.cols(); }

    /// Rest-pose world positions of every node.
    std::vector<Vec3> rest_joints() const;
    /// Throws ShapeError / ConfigError when an invariant is violated.
    void validate() const;
    /// FNV-1a over every field; cross-artifact provenance uses it.
    std::string fingerprint() const;
};

struct BodyConfig {
    std::uint64_t seed = 0;
    std::size_t shape_dim = 10;
    std::size_t vertices_per_bone = 10;
};

/// Deterministic 22-node SMPL-H-like body (K = 21 posed joints, V = 210 by default).
KinematicTree build_body(const BodyConfig& config = {});

inline constexpr int kBodyFormatVersion = 1;
/// JSON text with format_version 1. Doubles round-trip exactly.
std::string body_to_json(const KinematicTree& tree);
/// Throws ParseError on malformed input, VersionError on a version mismatch.
KinematicTree body_from_json(const std::string& text);

/// Per-vertex and per-node positions, meters. vertices is V x 3, joints is (K+1) x 3.
struct BodyMesh {
    Tensor2 vertices;
    Tensor2 joints;
};

struct PosedSkeleton {
    std::vector<Mat3> local;  // per node
    std::vector<Mat3> world;  // per node
    std::vector<Vec3> joints; // per node, meters
};

Mat3 rodrigues(const Vec3& axis_angle);
/// dR/dv_i for i = 0,1,2.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);
Mat3 skew(const Vec3& v);

/// Root sits at the origin with orientation root_orient (axis-angle).
PosedSkeleton forward_kinematics(const KinematicTree& tree, const PoseVector& pose,
                                 const Vec3& root_orient = Vec3::Zero());

BodyMesh skin(const KinematicTree& tree, const PoseVector& pose, const ShapeVector& shape,
              const Vec3& root_orient = Vec3::Zero());

/// Vector-Jacobian product of skin() w.r.t. the pose. Either gradient may be empty (treated as zero).
std::vector<double> skin_pose_vjp(const KinematicTree& tree, const PoseVector& pose, const ShapeVector& shape,
                                  const Tensor2& grad_vertices, const Tensor2& grad_joints,
                                  const Vec3& root_orient = Vec3::Zero());

/// Joint positions only, (K+1) x 3.
Tensor2 pose_joints(const KinematicTree& tree, const PoseVector& pose, const Vec3& root_orient = Vec3::Zero());

/// Mean per-vertex Euclidean distance, in millimeters.
double mesh_distance(const BodyMesh& a, const BodyMesh& b);
/// Same metric over raw V x 3 vertex arrays in meters.
double vertex_distance_mm(std::span<const double> a, std::span<const double> b);

struct Camera {
    double fx = 1000.0;
    double fy = 1000.0;
    double cx = 500.0;
    double cy = 500.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;
    /// Frontal camera 3 m in front of the body, looking back at it.
    static Camera frontal(double distance = 3.0);
};

struct Keypoints2D {
    Tensor2 points;             // J x 2, pixels
    std::vector<char> visible;  // J flags

    std::size_t size() const { return points.rows(); }
    std::size_t visible_count() const;
};

/// Pinhole projection of points (N x 3, meters). Throws ProjectionError for depth <= 0.
Keypoints2D project_points(const Camera& camera, const Tensor2& points);
Keypoints2D project(const Camera& camera, const BodyMesh& mesh);
/// Gradient of sum(grad_uv . uv) w.r.t. the 3D points.
Tensor2 project_points_vjp(const Camera& camera, const Tensor2& points, const Tensor2& grad_uv);

} // namespace appp
