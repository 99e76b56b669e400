#include "appp/prior_models.hpp"

#include "appp/errors.hpp"
#include "appp/hash.hpp"
#include "appp/rng.hpp"
#include "json_io.hpp"

#include <cmath>

namespace appp {

void GanTrainConfig::validate() const {
    latent.validate();
    if (d_steps_per_g_step < 1) throw ConfigError("d_steps_per_g_step must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (layout.output_dim() == 0) throw ConfigError("empty parameter layout");
}

namespace {

Tensor2 gather_rows(const Tensor2& t, const std::vector<std::size_t>& idx) {
    Tensor2 out(idx.size(), t.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = t.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<std::size_t> random_indices(Rng& rng, std::size_t n, std::size_t count) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(count);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

Tensor2 sample_latents(const LatentSpace& space, Rng& rng, std::size_t n) {
    Tensor2 z(n, space.dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = sample(space, rng);
        std::copy(v.values.begin(), v.values.end(), z.row(i).begin());
    }
    return z;
}

void check_data(const TrainingData& data, const ParamLayout& layout) {
    if (data.params.rows() == 0) throw ConfigError("training corpus is empty");
    if (data.params.cols() != layout.output_dim()) {
        throw ShapeError("training corpus width " + std::to_string(data.params.cols()) +
                         " does not match the parameter layout (" + std::to_string(layout.output_dim()) + ")");
    }
}

void finish_checkpoint(Checkpoint& ckpt, const nlohmann::json& config) {
    ckpt.training_config = config.dump();
    ckpt.config_hash = Hasher().str(ckpt.training_config).hex();
}

} // namespace

TrainResult train_gan(const GanTrainConfig& config, const TrainingData& data, std::string prior_name,
                      const GanStepHook& hook) {
    config.validate();
    check_data(data, config.layout);

    Generator gen = Generator::create(config.latent, config.layout, config.generator_hidden,
                                      derive_seed(config.seed, "generator"));
    DiscriminatorBank bank =
        DiscriminatorBank::create(config.layout, config.discriminator_hidden, derive_seed(config.seed, "discriminator"));
    AdamState g_adam = AdamState::for_params(gen.net.params, config.generator_adam);
    std::vector<AdamState> d_adam;
    for (const auto& n : bank.nets) d_adam.push_back(AdamState::for_params(n.params, config.discriminator_adam));

    const Tensor2 real_features = discriminator_features(config.layout, data.params);
    Rng rng(derive_seed(config.seed, "gan-train"));

    Checkpoint ckpt;
    ckpt.kind = PriorKind::gan;
    ckpt.prior_name = std::move(prior_name);
    ckpt.layout = config.layout;
    ckpt.corpus_fingerprint = data.fingerprint;
    ckpt.seed = config.seed;
    finish_checkpoint(ckpt, detail::gan_config_to_json(config));
    ckpt.generator = gen;

    std::vector<LossRecord> trace;
    trace.reserve(2 * config.generator_steps);
    std::vector<MlpParams> d_grads;
    std::size_t d_updates = 0;
    std::size_t g_updates = 0;

    auto abort = [&](const std::string& why) {
        throw TrainingAborted("train_gan: " + why + " at generator step " + std::to_string(g_updates), ckpt, trace);
    };

    for (std::size_t step = 0; step < config.generator_steps; ++step) {
        double d_loss = 0.0;
        for (std::size_t r = 0; r < config.d_steps_per_g_step; ++r) {
            const Tensor2 real = gather_rows(real_features, random_indices(rng, real_features.rows(), config.batch_size));
            const Tensor2 z = sample_latents(config.latent, rng, config.batch_size);
            const Tensor2 fake = discriminator_features(config.layout, generate_batch(gen, z));
            d_loss = discriminator_loss_grad(bank, real, fake, d_grads);
            if (!std::isfinite(d_loss)) abort("non-finite discriminator loss");
            try {
                for (std::size_t i = 0; i < bank.size(); ++i) adam_step(d_adam[i], bank.nets[i].params, d_grads[i]);
            } catch (const NumericsError& e) {
                abort(e.what());
            }
            ++d_updates;
        }
        const Tensor2 z = sample_latents(config.latent, rng, config.batch_size);
        MlpParams g_grad;
        const double g_loss = generator_loss_grad(gen, bank, z, &g_grad);
        if (!std::isfinite(g_loss)) abort("non-finite generator loss");
        try {
            adam_step(g_adam, gen.net.params, g_grad);
        } catch (const NumericsError& e) {
            abort(e.what());
        }
        ++g_updates;
        trace.push_back({step, "d_loss", d_loss});
        trace.push_back({step, "g_loss", g_loss});
        if (hook) hook(step, gen, bank);
        if (!gen.net.params.all_finite()) abort("non-finite generator parameters");

        ckpt.generator = gen;
        ckpt.generator_updates = g_updates;
        ckpt.discriminator_updates = d_updates;
    }
    return {std::move(ckpt), std::move(trace)};
}

TrainResult train_vae(const VaeTrainConfig& config, const TrainingData& data) {
    check_data(data, config.layout);
    if (config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    VaePrior vae = VaePrior::create(config.latent, config.layout, config.hidden, config.kl_weight,
                                    derive_seed(config.seed, "vae"));
    AdamState enc_adam = AdamState::for_params(vae.encoder.params, config.adam);
    AdamState dec_adam = AdamState::for_params(vae.decoder.net.params, config.adam);
    Rng rng(derive_seed(config.seed, "vae-train"));

    Checkpoint ckpt;
    ckpt.kind = PriorKind::vae;
    ckpt.prior_name = "vae";
    ckpt.layout = config.layout;
    ckpt.corpus_fingerprint = data.fingerprint;
    ckpt.seed = config.seed;
    ckpt.kl_weight = config.kl_weight;
    finish_checkpoint(ckpt, detail::vae_config_to_json(config));
    ckpt.generator = vae.decoder;
    ckpt.encoder = vae.encoder;

    std::vector<LossRecord> trace;
    for (std::size_t step = 0; step < config.steps; ++step) {
        const Tensor2 batch = gather_rows(data.params, random_indices(rng, data.params.rows(), config.batch_size));
        MlpParams ge, gd;
        VaeLosses l;
        try {
            l = vae_loss_grad(vae, batch, rng(), ge, gd);
            adam_step(enc_adam, vae.encoder.params, ge);
            adam_step(dec_adam, vae.decoder.net.params, gd);
        } catch (const NumericsError& e) {
            throw TrainingAborted(std::string("train_vae: ") + e.what() + " at step " + std::to_string(step), ckpt, trace);
        }
        trace.push_back({step, "reconstruction", l.reconstruction});
        trace.push_back({step, "kl", l.kl});
        trace.push_back({step, "total", l.total});
        ckpt.generator = vae.decoder;
        ckpt.encoder = vae.encoder;
        ckpt.generator_updates = step + 1;
    }
    return {std::move(ckpt), std::move(trace)};
}

TrainResult train_gmm(const GmmTrainConfig& config, const TrainingData& data, const ParamLayout& layout) {
    check_data(data, layout);
    auto fit = gmm_fit_em(data.params, config.components, config.seed, config.max_iterations);
    Checkpoint ckpt;
    ckpt.kind = PriorKind::gmm;
    ckpt.prior_name = "gmm";
    ckpt.layout = layout;
    ckpt.corpus_fingerprint = data.fingerprint;
    ckpt.seed = config.seed;
    finish_checkpoint(ckpt, detail::gmm_config_to_json(config));
    ckpt.gmm = std::move(fit.gmm);
    std::vector<LossRecord> trace;
    for (std::size_t i = 0; i < fit.log_likelihood.size(); ++i) trace.push_back({i, "log_likelihood", fit.log_likelihood[i]});
    return {std::move(ckpt), std::move(trace)};
}

Tensor2 sample_params(const Checkpoint& ckpt, std::size_t n, std::uint64_t seed) {
    if (ckpt.kind == PriorKind::gmm) {
        if (!ckpt.gmm) throw ConfigError("checkpoint has no GMM");
        return gmm_sample(*ckpt.gmm, n, derive_seed(seed, "gmm-sample"));
    }
    const Generator& g = ckpt.require_generator();
    Rng rng(derive_seed(seed, "latent-sample"));
    return generate_batch(g, sample_latents(g.latent, rng, n));
}

std::string to_string(PriorKind k) {
    switch (k) {
    case PriorKind::gan: return "gan";
    case PriorKind::vae: return "vae";
    case PriorKind::gmm: return "gmm";
    }
    return "gan";
}

std::string Checkpoint::params_hash() const {
    Hasher h;
    if (generator) h.str(generator->net.params.hash());
    if (encoder) h.str(encoder->params.hash());
    if (gmm) {
        h.reals(gmm->weights).reals(gmm->means.values()).reals(gmm->variances.values());
    }
    return h.hex();
}

const Generator& Checkpoint::require_generator() const {
    if (!generator) throw ConfigError("prior '" + prior_name + "' has no generator (GMM priors have no latent space)");
    return *generator;
}

} // namespace appp
