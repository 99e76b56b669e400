#pragma once

#include "appp/body_model.hpp"
#include "appp/latent_space.hpp"
#include "appp/optim.hpp"
#include "appp/pose_corpus.hpp"
#include "appp/prior_models.hpp"

#include <optional>
#include <string>
#include <vector>

namespace appp {

// ---------------------------------------------------------------------------
// L-BFGS.

struct LbfgsConfig {
    std::size_t memory = 10;
    std::size_t max_iterations = 200;
    double gradient_tolerance = 1e-10;
    double c1 = 1e-4;
    double c2 = 0.9;
    std::size_t max_line_search = 40;

    void validate() const; // 0 < c1 < c2 < 1, memory >= 1
};

struct LbfgsIterate {
    std::size_t iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double step_len = 0.0;
    bool projected = false; // projection moved the point by more than 1e-9
};

struct LbfgsResult {
    std::vector<double> x;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::string stop_reason;
    std::vector<LbfgsIterate> trace; // entry 0 is the starting point
};

/// Minimizes f from x0. Without a space the problem is unconstrained and uses a strong-Wolfe line
/// search. With a normal space the same. With a uniform space, projected L-BFGS on the box
/// (history dropped whenever clamping moves the point). With a spherical space, L-BFGS on the sphere
/// with renormalization as the retraction. Every iterate satisfies the space invariant.
LbfgsResult lbfgs_minimize(const ScalarFunction& f, std::span<const double> x0, const LbfgsConfig& config,
                           const LatentSpace* space = nullptr);

/// CSV with header iter,loss,grad_norm,step_len,projected.
std::string lbfgs_trace_csv(const std::vector<LbfgsIterate>& trace);

// ---------------------------------------------------------------------------
// Keypoint fitting through a frozen prior.

struct FitProblem {
    const Generator* prior = nullptr;
    const KinematicTree* tree = nullptr;
    Camera camera;
    Keypoints2D targets;   // one per body node (K+1)
    ShapeVector shape;     // empty means zero shape
    Vec3 root_orient = Vec3::Zero();
    std::optional<Tensor2> truth_vertices; // V x 3 meters; enables mesh errors

    void validate() const;
};

struct ObjectiveValue {
    double loss = 0.0;
    std::vector<double> grad;
    bool behind_camera = false; // loss is +inf, gradient zero
    bool degenerate = false;    // no visible joints
};

/// Sum over visible joints of the squared pixel error of the projected pose G(z).
ObjectiveValue fit_objective(const FitProblem& problem, std::span<const double> z);

struct RestartLog {
    std::size_t restart = 0;
    double loss = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

struct FitResult {
    LatentVector z;
    PoseVector pose;
    double loss = 0.0;
    double reprojection_px = 0.0;            // mean Euclidean error over visible joints
    std::optional<double> mesh_error_mm;     // against truth_vertices when given
    std::size_t iterations = 0;
    bool converged = false;
    bool behind_camera = false;
    bool degenerate = false;
    std::vector<LbfgsIterate> trace;
    std::vector<RestartLog> restarts;
};

/// Single L-BFGS run from z0.
FitResult fit_from(const FitProblem& problem, const LatentVector& z0, const LbfgsConfig& config);

/// Multi-start: restart i starts from sample(space, derive_seed(seed, "restart", i)).
/// Returns the lowest-loss run; every restart is logged.
FitResult fit_keypoints(const FitProblem& problem, const LbfgsConfig& config, std::size_t restarts,
                        std::uint64_t seed);

struct MeshFitResult {
    LatentVector z;
    PoseVector pose;
    double distance_mm = 0.0; // mean per-vertex distance to the target
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<LbfgsIterate> trace;
};

/// Fits z so that skin(G(z), 0) matches the target vertices (V x 3, meters). The optimizer minimizes
/// the mean squared per-vertex distance in mm^2; the reported distance is the mean per-vertex norm.
MeshFitResult fit_mesh_target(const Generator& prior, const KinematicTree& tree, const Tensor2& target_vertices,
                              const LbfgsConfig& config, std::size_t restarts, std::uint64_t seed);

/// Direct pose-space fit with a GMM penalty: reprojection + lambda * gmm_neg_log_prob(pose).
/// Starts from x0 if given, otherwise from the mean of the heaviest component.
struct GmmFitProblem {
    const GmmPrior* gmm = nullptr;
    const KinematicTree* tree = nullptr;
    Camera camera;
    Keypoints2D targets;
    Vec3 root_orient = Vec3::Zero();
};

ObjectiveValue gmm_fit_objective(const GmmFitProblem& problem, double lambda, std::span<const double> pose);
FitResult gmm_fit_keypoints(const GmmFitProblem& problem, double lambda, const LbfgsConfig& config,
                            std::optional<PoseVector> x0 = std::nullopt);

// ---------------------------------------------------------------------------
// Keypoint-to-latent regressor.

/// Keypoints centered on the pelvis (node 0) and divided by the pelvis-to-neck image distance.
std::vector<double> normalize_keypoints(const Keypoints2D& kp, std::size_t neck_node);

struct CameraJitter {
    double distance_min = 2.5;
    double distance_max = 3.5;
    double principal_jitter_px = 20.0;
    double focal_jitter = 0.1; // relative
};

Camera sample_camera(const CameraJitter& jitter, std::uint64_t seed);

struct RegressorConfig {
    std::vector<std::size_t> hidden{64, 64};
    std::size_t steps = 1500;
    std::size_t batch_size = 16;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
    double keypoint_noise_px = 1.0;
    CameraJitter cameras;
    std::uint64_t seed = 0;
};

struct Regressor {
    Mlp net;                       // normalized keypoints -> raw latent
    LatentSpace space;
    std::size_t neck_node = 0;
    std::string prior_params_hash; // hash of the frozen generator it was trained against
};

/// Untrained regressor with the architecture train_regressor uses.
Regressor make_regressor(const Generator& prior, const KinematicTree& tree, const RegressorConfig& config);

/// Projection onto the latent support is the last layer, so the output always satisfies it.
LatentVector regress(const Regressor& reg, const Keypoints2D& keypoints);

struct RegressorTrainResult {
    Regressor regressor;
    std::vector<LossRecord> trace;
};

/// Trains only the regressor; the prior is read-only. Loss is the mean per-vertex distance (mm)
/// between skin(G(F(keypoints)), 0) and the ground-truth mesh.
RegressorTrainResult train_regressor(const Generator& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                     const RegressorConfig& config);

/// Per-sample mesh errors (mm) on n corpus poses seen through seeded jittered cameras.
std::vector<double> evaluate_regressor(const Regressor& reg, const Generator& prior, const KinematicTree& tree,
                                       const PoseCorpus& corpus, std::size_t n, const CameraJitter& cameras,
                                       double noise_px, std::uint64_t seed);

} // namespace appp
