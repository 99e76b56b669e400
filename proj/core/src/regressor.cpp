#include "appp/latent_fit.hpp"

#include "appp/errors.hpp"
#include "appp/rng.hpp"

#include <algorithm>
#include <cmath>

namespace appp {

namespace {

std::size_t find_neck(const KinematicTree& tree) {
    for (std::size_t k = 0; k < tree.names.size(); ++k) {
        if (tree.names[k] == "neck") return k;
    }
    return tree.node_count() - 1;
}

// Smooths the per-vertex norm at zero so the loss stays differentiable.
constexpr double kNormEps = 1e-6; // mm^2

} // namespace

std::vector<double> normalize_keypoints(const Keypoints2D& kp, std::size_t neck_node) {
    if (kp.size() == 0 || neck_node >= kp.size()) throw ShapeError("normalize_keypoints: bad keypoint set");
    const double ox = kp.points(0, 0);
    const double oy = kp.points(0, 1);
    double scale = std::hypot(kp.points(neck_node, 0) - ox, kp.points(neck_node, 1) - oy);
    if (!(scale > 1e-9)) scale = 1.0;
    std::vector<double> out(2 * kp.size());
    for (std::size_t i = 0; i < kp.size(); ++i) {
        out[2 * i] = (kp.points(i, 0) - ox) / scale;
        out[2 * i + 1] = (kp.points(i, 1) - oy) / scale;
    }
    return out;
}

Camera sample_camera(const CameraJitter& j, std::uint64_t seed) {
    Rng rng(seed);
    Camera cam = Camera::frontal(uniform(rng, j.distance_min, j.distance_max));
    const double f = 1.0 + uniform(rng, -j.focal_jitter, j.focal_jitter);
    cam.fx *= f;
    cam.fy *= f;
    cam.cx += uniform(rng, -j.principal_jitter_px, j.principal_jitter_px);
    cam.cy += uniform(rng, -j.principal_jitter_px, j.principal_jitter_px);
    return cam;
}

Regressor make_regressor(const Generator& prior, const KinematicTree& tree, const RegressorConfig& config) {
    MlpSpec spec;
    spec.widths.push_back(2 * tree.node_count());
    spec.widths.insert(spec.widths.end(), config.hidden.begin(), config.hidden.end());
    spec.widths.push_back(prior.latent.dim);
    spec.hidden = Activation::leaky_relu(0.2);
    spec.output = Activation::identity();
    spec.seed = derive_seed(config.seed, "regressor");
    return Regressor{Mlp::create(spec), prior.latent, find_neck(tree), prior.net.params.hash()};
}

LatentVector regress(const Regressor& reg, const Keypoints2D& keypoints) {
    const auto x = normalize_keypoints(keypoints, reg.neck_node);
    const Tensor2 raw = mlp_apply(reg.net, row_tensor(x));
    return project(reg.space, raw.row(0));
}

namespace {

// Noisy keypoints of a ground-truth pose through a jittered camera.
Keypoints2D observe(const KinematicTree& tree, const PoseVector& pose, const CameraJitter& jitter, double noise_px,
                    std::uint64_t seed) {
    const Camera cam = sample_camera(jitter, derive_seed(seed, "camera"));
    Keypoints2D kp = project_points(cam, pose_joints(tree, pose));
    Rng rng(derive_seed(seed, "noise"));
    for (auto& v : kp.points.values()) v += noise_px * standard_normal(rng);
    return kp;
}

// d z / d raw applied to a gradient (projection Jacobian transpose).
void projection_vjp(const LatentSpace& space, std::span<const double> raw, std::span<double> g) {
    if (space.kind == LatentKind::spherical) {
        double n2 = 0.0;
        for (double v : raw) n2 += v * v;
        const double n = std::sqrt(n2);
        double gz = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) gz += g[i] * raw[i] / n;
        for (std::size_t i = 0; i < raw.size(); ++i) g[i] = (g[i] - gz * raw[i] / n) / n;
    } else if (space.kind == LatentKind::uniform) {
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] < -1.0 || raw[i] > 1.0) g[i] = 0.0;
        }
    }
}

} // namespace

RegressorTrainResult train_regressor(const Generator& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                     const RegressorConfig& config) {
    if (corpus.size() == 0) throw ConfigError("train_regressor: empty corpus");
    if (!prior.layout.has_pose() || prior.layout.joints != tree.joint_count() || corpus.joints() != tree.joint_count()) {
        throw ShapeError("train_regressor: prior, body and corpus disagree on the joint count");
    }
    if (config.batch_size == 0) throw ConfigError("train_regressor: batch_size must be positive");
    Regressor reg = make_regressor(prior, tree, config);
    AdamState adam = AdamState::for_params(reg.net.params, config.adam);
    const ShapeVector zero = ShapeVector::zeros(tree.shape_dim());
    const std::size_t B = config.batch_size;
    const std::size_t d = prior.latent.dim;
    const double nv = static_cast<double>(tree.vertex_count());
    Rng pick_rng(derive_seed(config.seed, "regressor-batches"));
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

    RegressorTrainResult result;
    for (std::size_t step = 0; step < config.steps; ++step) {
        Tensor2 input(B, 2 * tree.node_count());
        std::vector<std::size_t> idx(B);
        for (std::size_t b = 0; b < B; ++b) {
            idx[b] = pick(pick_rng);
            const auto kp = observe(tree, corpus.pose(idx[b]), config.cameras, config.keypoint_noise_px,
                                    derive_seed(config.seed, "regressor-sample", step * B + b));
            const auto x = normalize_keypoints(kp, reg.neck_node);
            std::copy(x.begin(), x.end(), input.row(b).begin());
        }
        const auto rfw = mlp_forward(reg.net, input);
        Tensor2 z(B, d);
        for (std::size_t b = 0; b < B; ++b) {
            const auto zb = project(prior.latent, rfw.output.row(b));
            std::copy(zb.values.begin(), zb.values.end(), z.row(b).begin());
        }
        const auto gfw = generator_forward(prior, z);
        Tensor2 g_out(B, prior.layout.output_dim());
        double loss = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const auto row = gfw.output.row(b);
            const PoseVector pose(std::vector<double>(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(prior.layout.pose_dim())));
            const BodyMesh mesh = skin(tree, pose, zero);
            const BodyMesh truth = skin(tree, corpus.pose(idx[b]), zero);
            Tensor2 gv(tree.vertex_count(), 3);
            for (std::size_t v = 0; v < tree.vertex_count(); ++v) {
                double dd[3];
                double n2 = kNormEps;
                for (std::size_t c = 0; c < 3; ++c) {
                    dd[c] = 1000.0 * (mesh.vertices(v, c) - truth.vertices(v, c));
                    n2 += dd[c] * dd[c];
                }
                const double n = std::sqrt(n2);
                loss += n / nv / static_cast<double>(B);
                for (std::size_t c = 0; c < 3; ++c) gv(v, c) = 1000.0 * dd[c] / n / nv / static_cast<double>(B);
            }
            const auto g_pose = skin_pose_vjp(tree, pose, zero, gv, Tensor2());
            std::copy(g_pose.begin(), g_pose.end(), g_out.row(b).begin());
        }
        if (!std::isfinite(loss)) {
            throw NumericsError("train_regressor: non-finite loss at step " + std::to_string(step));
        }
        auto gbw = generator_backward(prior, gfw, g_out, false);
        for (std::size_t b = 0; b < B; ++b) projection_vjp(prior.latent, rfw.output.row(b), gbw.input.row(b));
        const auto rbw = mlp_backward(reg.net, rfw.tape, gbw.input, true);
        adam_step(adam, reg.net.params, rbw.params);
        result.trace.push_back({step, "mesh_error_mm", loss});
    }
    result.regressor = std::move(reg);
    return result;
}

std::vector<double> evaluate_regressor(const Regressor& reg, const Generator& prior, const KinematicTree& tree,
                                       const PoseCorpus& corpus, std::size_t n, const CameraJitter& cameras,
                                       double noise_px, std::uint64_t seed) {
    if (corpus.size() == 0) throw ConfigError("evaluate_regressor: empty corpus");
    const ShapeVector zero = ShapeVector::zeros(tree.shape_dim());
    std::vector<double> errors(n);
    for (std::size_t i = 0; i < n; ++i) {
        const PoseVector truth = corpus.pose(i % corpus.size());
        const auto kp = observe(tree, truth, cameras, noise_px, derive_seed(seed, "regressor-eval", i));
        const auto z = regress(reg, kp);
        const auto p = generate(prior, z);
        errors[i] = mesh_distance(skin(tree, p.pose, zero), skin(tree, truth, zero));
    }
    return errors;
}

} // namespace appp
