#pragma once

#include "appp/body_model.hpp"
#include "appp/errors.hpp"
#include "appp/latent_space.hpp"
#include "appp/mlp.hpp"
#include "appp/optim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace appp {

// ---------------------------------------------------------------------------
// Parameter space of the generator output.

enum class ParamSpace { pose_only, shape_only, pose_and_shape };

std::string to_string(ParamSpace s);
ParamSpace param_space_from_string(const std::string& s);

struct ParamLayout {
    ParamSpace space = ParamSpace::pose_only;
    std::size_t joints = 21;   // K
    std::size_t shape_dim = 10; // B

    bool has_pose() const { return space != ParamSpace::shape_only; }
    bool has_shape() const { return space != ParamSpace::pose_only; }
    std::size_t pose_dim() const { return has_pose() ? 3 * joints : 0; }
    std::size_t output_dim() const { return pose_dim() + (has_shape() ? shape_dim : 0); }
    /// Number of discriminators the bank needs: K+1, 1 or K+3.
    std::size_t discriminator_count() const;

    friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

// ---------------------------------------------------------------------------
// Generator: latent -> bounded body parameters.

/// Shape coefficients are squashed into (-kShapeBound, kShapeBound).
inline constexpr double kShapeBound = 3.0;

struct Generator {
    Mlp net; // tanh output, scaled per component
    LatentSpace latent;
    ParamLayout layout;

    /// d -> hidden... -> output_dim, tanh throughout. Smooth in z, so latent fits see no kinks.
    static Generator create(const LatentSpace& latent, const ParamLayout& layout,
                            const std::vector<std::size_t>& hidden, std::uint64_t seed);
    /// pi on pose components, kShapeBound on shape components.
    std::vector<double> output_scale() const;
};

struct GeneratedParams {
    PoseVector pose;   // empty for shape_only
    ShapeVector shape; // empty for pose_only
};

/// Batch map, one latent per row. Does not check latent invariants.
Tensor2 generate_batch(const Generator& g, const Tensor2& latents);
/// Throws SpaceError if z does not belong to the generator's latent space.
GeneratedParams generate(const Generator& g, const LatentVector& z);

struct GeneratorForward {
    Tensor2 output;
    MlpTape tape;
};
GeneratorForward generator_forward(const Generator& g, const Tensor2& latents);
/// Gradient w.r.t. generator params and latents, given d(loss)/d(output).
MlpGradients generator_backward(const Generator& g, const GeneratorForward& fw, const Tensor2& output_grad,
                                bool want_params = true);

// ---------------------------------------------------------------------------
// Discriminator bank.

enum class DiscriminatorRole { joint, pose, shape, full };

struct DiscriminatorBank {
    ParamLayout layout;
    std::vector<DiscriminatorRole> roles;
    std::vector<std::size_t> joint_index; // meaningful for role == joint
    std::vector<Mlp> nets;                // logits; D = sigmoid(logit)

    /// K per-joint nets on 9-dim rotation matrices, one whole-pose net on 9K, plus a shape net
    /// on B and a full-vector net on 9K+B when the layout carries shape.
    static DiscriminatorBank create(const ParamLayout& layout, const std::vector<std::size_t>& hidden,
                                    std::uint64_t seed);
    std::size_t size() const { return nets.size(); }
    std::vector<MlpParams> zero_grads() const;
};

/// Discriminator input features: flattened rotation matrices of each joint, then shape.
Tensor2 discriminator_features(const ParamLayout& layout, const Tensor2& params);

struct GanLosses {
    double d_loss = 0.0; // summed over the bank
    double g_loss = 0.0; // non-saturating, summed over the bank
    std::vector<double> d_loss_per_net;
    std::vector<double> g_loss_per_net;
};

/// Throws BatchError on an empty batch.
GanLosses gan_losses(const DiscriminatorBank& bank, const Tensor2& real, const Tensor2& fake);

/// Discriminator loss and its gradient w.r.t. every bank net.
double discriminator_loss_grad(const DiscriminatorBank& bank, const Tensor2& real_features,
                               const Tensor2& fake_features, std::vector<MlpParams>& grads);

/// Non-saturating generator loss -mean log D(G(z)) summed over the bank, with the gradient
/// w.r.t. the generator parameters (and latents via latent_grad when non-null).
double generator_loss_grad(const Generator& g, const DiscriminatorBank& bank, const Tensor2& latents,
                           MlpParams* param_grad, Tensor2* latent_grad = nullptr);

// ---------------------------------------------------------------------------
// VAE baseline.

struct VaePrior {
    Mlp encoder;       // output_dim -> ... -> 2d (mean, log variance)
    Generator decoder; // normal latent space
    double kl_weight = 5e-3;

    static VaePrior create(const LatentSpace& latent, const ParamLayout& layout,
                           const std::vector<std::size_t>& hidden, double kl_weight, std::uint64_t seed);
};

struct VaeLosses {
    double reconstruction = 0.0; // mean over the batch of the per-sample squared pose error
    double kl = 0.0;             // mean over the batch of KL(q(z|x) || N(0,I))
    double total = 0.0;          // reconstruction + kl_weight * kl
};

/// Reparameterized z = mu + sigma * eps with eps drawn from seed. Throws NumericsError when non-finite.
VaeLosses vae_losses(const VaePrior& vae, const Tensor2& real, std::uint64_t seed);
VaeLosses vae_loss_grad(const VaePrior& vae, const Tensor2& real, std::uint64_t seed, MlpParams& encoder_grad,
                        MlpParams& decoder_grad);

// ---------------------------------------------------------------------------
// GMM baseline (diagonal covariances).

inline constexpr double kGmmVarianceFloor = 1e-6;

struct GmmPrior {
    std::vector<double> weights; // C, sums to 1
    Tensor2 means;               // C x D
    Tensor2 variances;           // C x D, >= kGmmVarianceFloor

    std::size_t components() const { return weights.size(); }
    std::size_t dim() const { return means.cols(); }
};

struct GmmFitResult {
    GmmPrior gmm;
    std::vector<double> log_likelihood; // mean per-point log-likelihood before each M-step
    std::vector<std::string> warnings;
};

/// EM with seeded k-means++ initialization. Requires at least C rows.
GmmFitResult gmm_fit_em(const Tensor2& data, std::size_t components, std::uint64_t seed,
                        std::size_t max_iterations = 200, double tolerance = 1e-9);

/// -log sum_i w_i N(x; mu_i, Sigma_i). Fills grad when it is non-empty.
double gmm_neg_log_prob(const GmmPrior& gmm, std::span<const double> x, std::span<double> grad = {});

/// Draws from the mixture; pose components are clamped to [-pi, pi].
Tensor2 gmm_sample(const GmmPrior& gmm, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training.

struct LossRecord {
    std::size_t step = 0;
    std::string name;
    double value = 0.0;
};

/// Real training data plus the fingerprint of the manifold it came from.
struct TrainingData {
    Tensor2 params; // one sample per row, ParamLayout order
    std::string fingerprint;
};

struct GanTrainConfig {
    LatentSpace latent;
    ParamLayout layout;
    std::vector<std::size_t> generator_hidden{64, 64};
    std::vector<std::size_t> discriminator_hidden{32, 32};
    std::size_t d_steps_per_g_step = 10;
    std::size_t batch_size = 128;
    std::size_t generator_steps = 1000;
    AdamConfig generator_adam{};
    AdamConfig discriminator_adam{};
    std::uint64_t seed = 0;

    void validate() const;
};

struct VaeTrainConfig {
    LatentSpace latent{LatentKind::normal, 32};
    ParamLayout layout;
    std::vector<std::size_t> hidden{64, 64};
    double kl_weight = 5e-3;
    std::size_t batch_size = 128;
    std::size_t steps = 2000;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
    std::uint64_t seed = 0;
};

struct GmmTrainConfig {
    std::size_t components = 8;
    std::size_t max_iterations = 200;
    std::uint64_t seed = 0;
};

enum class PriorKind { gan, vae, gmm };
std::string to_string(PriorKind k);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    int format_version = kCheckpointVersion;
    PriorKind kind = PriorKind::gan;
    std::string prior_name;              // gan-s, gan-u, gan-n, vae, gmm
    ParamLayout layout;
    std::optional<Generator> generator;  // GAN generator or VAE decoder
    std::optional<Mlp> encoder;          // VAE only
    double kl_weight = 0.0;              // VAE only
    std::optional<GmmPrior> gmm;         // GMM only
    std::string training_config;         // JSON text, seed excluded
    std::string config_hash;             // hash of training_config
    std::string corpus_fingerprint;
    std::uint64_t seed = 0;
    std::size_t generator_updates = 0;
    std::size_t discriminator_updates = 0;

    /// Hash over every learned parameter; unchanged by any downstream use.
    std::string params_hash() const;
    const Generator& require_generator() const;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> trace;
};

/// Raised when a loss turns non-finite; carries the last checkpoint whose losses were finite.
class TrainingAborted : public NumericsError {
public:
    TrainingAborted(const std::string& what, Checkpoint last_good, std::vector<LossRecord> trace)
        : NumericsError(what), last_good_(std::move(last_good)), trace_(std::move(trace)) {}
    const Checkpoint& last_good() const { return last_good_; }
    const std::vector<LossRecord>& trace() const { return trace_; }

private:
    Checkpoint last_good_;
    std::vector<LossRecord> trace_;
};

/// Optional hook to observe (and in tests, corrupt) state between generator updates.
using GanStepHook = std::function<void(std::size_t step, Generator&, DiscriminatorBank&)>;

/// Runs exactly d_steps_per_g_step discriminator updates before every generator update.
TrainResult train_gan(const GanTrainConfig& config, const TrainingData& data, std::string prior_name = "gan",
                      const GanStepHook& hook = {});
TrainResult train_vae(const VaeTrainConfig& config, const TrainingData& data);
TrainResult train_gmm(const GmmTrainConfig& config, const TrainingData& data, const ParamLayout& layout);

/// Pose-space samples from any prior kind (GMM samples drawn from the mixture).
Tensor2 sample_params(const Checkpoint& ckpt, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoint files (JSON, format_version 1).

std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws ParseError on malformed input, VersionError on a version mismatch.
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace appp
