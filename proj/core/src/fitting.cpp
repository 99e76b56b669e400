#include "appp/latent_fit.hpp"

#include "appp/errors.hpp"
#include "appp/parallel.hpp"
#include "appp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace appp {

void FitProblem::validate() const {
    if (prior == nullptr || tree == nullptr) throw ConfigError("FitProblem: prior and body are required");
    if (!prior->layout.has_pose()) throw ConfigError("FitProblem: the prior does not generate poses");
    if (prior->layout.joints != tree->joint_count()) throw ShapeError("FitProblem: prior and body joint counts differ");
    if (targets.size() != tree->node_count() || targets.visible.size() != tree->node_count()) {
        throw ShapeError("FitProblem: expected " + std::to_string(tree->node_count()) + " target keypoints");
    }
    camera.validate();
    if (truth_vertices && (truth_vertices->rows() != tree->vertex_count() || truth_vertices->cols() != 3)) {
        throw ShapeError("FitProblem: truth vertices must be V x 3");
    }
}

namespace {

struct Reprojection {
    double loss = 0.0;
    double mean_px = 0.0;
    Tensor2 grad_joints; // empty when behind the camera
    bool behind = false;
    bool degenerate = false;
};

// Squared pixel error of the visible joints and its gradient w.r.t. the joint positions.
Reprojection reprojection(const Camera& cam, const Keypoints2D& targets, const Tensor2& joints, bool want_grad) {
    Reprojection r;
    const std::size_t n = joints.rows();
    std::size_t visible = 0;
    Tensor2 grad_uv(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        if (!targets.visible[i]) continue;
        ++visible;
        const Vec3 x = cam.rotation * Vec3(joints(i, 0), joints(i, 1), joints(i, 2)) + cam.translation;
        if (!(x.z() > 0.0)) {
            r.behind = true;
            r.loss = std::numeric_limits<double>::infinity();
            return r;
        }
        const double du = cam.fx * x.x() / x.z() + cam.cx - targets.points(i, 0);
        const double dv = cam.fy * x.y() / x.z() + cam.cy - targets.points(i, 1);
        r.loss += du * du + dv * dv;
        r.mean_px += std::sqrt(du * du + dv * dv);
        grad_uv(i, 0) = 2.0 * du;
        grad_uv(i, 1) = 2.0 * dv;
    }
    r.degenerate = visible == 0;
    if (visible > 0) r.mean_px /= static_cast<double>(visible);
    if (want_grad) r.grad_joints = project_points_vjp(cam, joints, grad_uv);
    return r;
}

ShapeVector shape_or_zero(const KinematicTree& tree, const ShapeVector& s) {
    return s.values.empty() ? ShapeVector::zeros(tree.shape_dim()) : s;
}

PoseVector pose_of(const Generator& g, std::span<const double> row) {
    return PoseVector(std::vector<double>(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(g.layout.pose_dim())));
}

std::vector<double> latent_grad(const Generator& g, const GeneratorForward& fw, const std::vector<double>& g_pose) {
    Tensor2 g_out(1, g.layout.output_dim());
    std::copy(g_pose.begin(), g_pose.end(), g_out.row(0).begin());
    const auto bw = generator_backward(g, fw, g_out, false);
    return std::vector<double>(bw.input.row(0).begin(), bw.input.row(0).end());
}

LatentVector make_latent(const LatentSpace& space, std::span<const double> x) {
    LatentVector z{std::vector<double>(x.begin(), x.end()), space};
    return z.satisfies_invariant() ? z : project(space, x);
}

} // namespace

ObjectiveValue fit_objective(const FitProblem& p, std::span<const double> z) {
    const Generator& g = *p.prior;
    if (z.size() != g.latent.dim) throw ShapeError("fit_objective: latent dimension mismatch");
    const auto fw = generator_forward(g, row_tensor(z));
    const PoseVector pose = pose_of(g, fw.output.row(0));
    const Tensor2 joints = pose_joints(*p.tree, pose, p.root_orient);
    const auto r = reprojection(p.camera, p.targets, joints, true);
    ObjectiveValue out;
    out.grad.assign(z.size(), 0.0);
    out.degenerate = r.degenerate;
    if (r.behind) {
        out.behind_camera = true;
        out.loss = std::numeric_limits<double>::infinity();
        return out;
    }
    out.loss = r.loss;
    if (r.degenerate) return out;
    const auto g_pose = skin_pose_vjp(*p.tree, pose, shape_or_zero(*p.tree, p.shape), Tensor2(), r.grad_joints,
                                      p.root_orient);
    out.grad = latent_grad(g, fw, g_pose);
    return out;
}

namespace {

FitResult finish_fit(const FitProblem& p, const LbfgsResult& lr) {
    const Generator& g = *p.prior;
    FitResult res;
    res.z = make_latent(g.latent, lr.x);
    const Tensor2 out = generate_batch(g, row_tensor(res.z.values));
    res.pose = pose_of(g, out.row(0));
    res.iterations = lr.iterations;
    res.converged = lr.converged;
    res.trace = lr.trace;
    const Tensor2 joints = pose_joints(*p.tree, res.pose, p.root_orient);
    const auto r = reprojection(p.camera, p.targets, joints, false);
    res.loss = r.loss;
    res.reprojection_px = r.behind ? std::numeric_limits<double>::infinity() : r.mean_px;
    res.behind_camera = r.behind;
    res.degenerate = r.degenerate;
    if (p.truth_vertices) {
        const BodyMesh mesh = skin(*p.tree, res.pose, shape_or_zero(*p.tree, p.shape), p.root_orient);
        res.mesh_error_mm = vertex_distance_mm(mesh.vertices.values(), p.truth_vertices->values());
    }
    return res;
}

} // namespace

FitResult fit_from(const FitProblem& p, const LatentVector& z0, const LbfgsConfig& config) {
    p.validate();
    if (!(z0.space == p.prior->latent)) throw SpaceError("fit_from: z0 is not in the prior's latent space");
    if (!z0.satisfies_invariant()) throw SpaceError("fit_from: z0 violates its latent-space invariant");
    const ScalarFunction f = [&p](std::span<const double> z, std::span<double> grad) {
        auto v = fit_objective(p, z);
        if (!grad.empty()) std::copy(v.grad.begin(), v.grad.end(), grad.begin());
        return v.loss;
    };
    const auto lr = lbfgs_minimize(f, z0.values, config, &p.prior->latent);
    return finish_fit(p, lr);
}

FitResult fit_keypoints(const FitProblem& p, const LbfgsConfig& config, std::size_t restarts, std::uint64_t seed) {
    p.validate();
    if (restarts == 0) throw ConfigError("fit_keypoints: need at least one restart");
    std::vector<FitResult> runs(restarts);
    parallel_for(restarts, [&](std::size_t i) {
        runs[i] = fit_from(p, sample(p.prior->latent, derive_seed(seed, "restart", i)), config);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < restarts; ++i) {
        if (runs[i].loss < runs[best].loss) best = i;
    }
    FitResult out = runs[best];
    for (std::size_t i = 0; i < restarts; ++i) out.restarts.push_back({i, runs[i].loss, runs[i].iterations, runs[i].converged});
    return out;
}

MeshFitResult fit_mesh_target(const Generator& g, const KinematicTree& tree, const Tensor2& target,
                              const LbfgsConfig& config, std::size_t restarts, std::uint64_t seed) {
    if (target.rows() != tree.vertex_count() || target.cols() != 3) throw ShapeError("fit_mesh_target: target must be V x 3");
    if (!g.layout.has_pose() || g.layout.joints != tree.joint_count()) {
        throw ShapeError("fit_mesh_target: prior does not match the body");
    }
    if (restarts == 0) throw ConfigError("fit_mesh_target: need at least one restart");
    const ShapeVector zero = ShapeVector::zeros(tree.shape_dim());
    const double nv = static_cast<double>(tree.vertex_count());
    const ScalarFunction f = [&](std::span<const double> z, std::span<double> grad) {
        const auto fw = generator_forward(g, row_tensor(z));
        const PoseVector pose = pose_of(g, fw.output.row(0));
        const BodyMesh mesh = skin(tree, pose, zero);
        Tensor2 gv(tree.vertex_count(), 3);
        double loss = 0.0;
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const double d = 1000.0 * (mesh.vertices.values()[i] - target.values()[i]);
            loss += d * d / nv;
            gv.values()[i] = 2.0 * 1000.0 * d / nv;
        }
        if (!grad.empty()) {
            const auto g_pose = skin_pose_vjp(tree, pose, zero, gv, Tensor2());
            const auto gz = latent_grad(g, fw, g_pose);
            std::copy(gz.begin(), gz.end(), grad.begin());
        }
        return loss;
    };
    std::vector<MeshFitResult> runs(restarts);
    for (std::size_t i = 0; i < restarts; ++i) {
        const auto z0 = sample(g.latent, derive_seed(seed, "mesh-restart", i));
        const auto lr = lbfgs_minimize(f, z0.values, config, &g.latent);
        MeshFitResult r;
        r.z = make_latent(g.latent, lr.x);
        const Tensor2 out = generate_batch(g, row_tensor(r.z.values));
        r.pose = pose_of(g, out.row(0));
        r.distance_mm = vertex_distance_mm(skin(tree, r.pose, zero).vertices.values(), target.values());
        r.iterations = lr.iterations;
        r.converged = lr.converged;
        r.trace = lr.trace;
        runs[i] = std::move(r);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < restarts; ++i) {
        if (runs[i].distance_mm < runs[best].distance_mm) best = i;
    }
    return runs[best];
}

ObjectiveValue gmm_fit_objective(const GmmFitProblem& p, double lambda, std::span<const double> x) {
    if (p.gmm == nullptr || p.tree == nullptr) throw ConfigError("GmmFitProblem: gmm and body are required");
    if (x.size() != 3 * p.tree->joint_count() || x.size() != p.gmm->dim()) throw ShapeError("gmm_fit_objective: pose size mismatch");
    const PoseVector pose(std::vector<double>(x.begin(), x.end()));
    const Tensor2 joints = pose_joints(*p.tree, pose, p.root_orient);
    const auto r = reprojection(p.camera, p.targets, joints, true);
    ObjectiveValue out;
    out.grad.assign(x.size(), 0.0);
    out.degenerate = r.degenerate;
    if (r.behind) {
        out.behind_camera = true;
        out.loss = std::numeric_limits<double>::infinity();
        return out;
    }
    if (!r.degenerate) {
        out.grad = skin_pose_vjp(*p.tree, pose, ShapeVector::zeros(p.tree->shape_dim()), Tensor2(), r.grad_joints,
                                 p.root_orient);
    }
    out.loss = r.loss;
    if (lambda != 0.0) {
        std::vector<double> g(x.size());
        out.loss += lambda * gmm_neg_log_prob(*p.gmm, x, g);
        for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += lambda * g[i];
    }
    return out;
}

FitResult gmm_fit_keypoints(const GmmFitProblem& p, double lambda, const LbfgsConfig& config,
                            std::optional<PoseVector> x0) {
    if (p.gmm == nullptr || p.tree == nullptr) throw ConfigError("GmmFitProblem: gmm and body are required");
    if (p.targets.size() != p.tree->node_count()) throw ShapeError("gmm_fit_keypoints: target count mismatch");
    std::vector<double> start;
    if (x0) {
        start = x0->values;
    } else {
        const auto& w = p.gmm->weights;
        const auto c = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
        start.assign(p.gmm->means.row(c).begin(), p.gmm->means.row(c).end());
    }
    const ScalarFunction f = [&](std::span<const double> x, std::span<double> grad) {
        auto v = gmm_fit_objective(p, lambda, x);
        if (!grad.empty()) std::copy(v.grad.begin(), v.grad.end(), grad.begin());
        return v.loss;
    };
    const auto lr = lbfgs_minimize(f, start, config, nullptr);
    FitResult res;
    res.pose = PoseVector(lr.x);
    res.z = LatentVector{lr.x, LatentSpace{LatentKind::normal, lr.x.size()}};
    res.loss = lr.loss;
    res.iterations = lr.iterations;
    res.converged = lr.converged;
    res.trace = lr.trace;
    const auto r = reprojection(p.camera, p.targets, pose_joints(*p.tree, res.pose, p.root_orient), false);
    res.reprojection_px = r.behind ? std::numeric_limits<double>::infinity() : r.mean_px;
    res.behind_camera = r.behind;
    res.degenerate = r.degenerate;
    return res;
}

} // namespace appp
