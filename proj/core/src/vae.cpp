#include "appp/prior_models.hpp"

#include "appp/errors.hpp"
#include "appp/rng.hpp"

#include <cmath>

namespace appp {

VaePrior VaePrior::create(const LatentSpace& latent, const ParamLayout& layout, const std::vector<std::size_t>& hidden,
                          double kl_weight, std::uint64_t seed) {
    if (latent.kind != LatentKind::normal) throw ConfigError("the VAE prior uses a normal latent space");
    MlpSpec enc;
    enc.widths.push_back(layout.output_dim());
    enc.widths.insert(enc.widths.end(), hidden.rbegin(), hidden.rend());
    enc.widths.push_back(2 * latent.dim);
    enc.hidden = Activation::leaky_relu(0.2);
    enc.output = Activation::identity();
    enc.seed = derive_seed(seed, "encoder");
    return VaePrior{Mlp::create(enc), Generator::create(latent, layout, hidden, derive_seed(seed, "decoder")),
                    kl_weight};
}

namespace {

VaeLosses run(const VaePrior& vae, const Tensor2& real, std::uint64_t seed, MlpParams* enc_grad,
              MlpParams* dec_grad) {
    if (real.rows() == 0) throw BatchError("vae_losses: empty batch");
    if (real.cols() != vae.decoder.layout.output_dim()) throw ShapeError("vae_losses: batch width mismatch");
    const std::size_t n = real.rows();
    const std::size_t d = vae.decoder.latent.dim;
    const double inv_n = 1.0 / static_cast<double>(n);

    auto efw = mlp_forward(vae.encoder, real);
    Rng rng(seed);
    Tensor2 eps(n, d);
    for (auto& e : eps.values()) e = standard_normal(rng);

    Tensor2 z(n, d);
    VaeLosses out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double mu = efw.output(i, j);
            const double lv = efw.output(i, d + j);
            z(i, j) = mu + std::exp(0.5 * lv) * eps(i, j);
            out.kl += 0.5 * (mu * mu + std::exp(lv) - lv - 1.0) * inv_n;
        }
    }
    auto dfw = generator_forward(vae.decoder, z);
    Tensor2 g_out(n, real.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < real.cols(); ++c) {
            const double diff = dfw.output(i, c) - real(i, c);
            out.reconstruction += diff * diff * inv_n;
            g_out(i, c) = 2.0 * diff * inv_n;
        }
    }
    out.total = out.reconstruction + vae.kl_weight * out.kl;
    if (!std::isfinite(out.total)) throw NumericsError("vae_losses: non-finite loss");
    if (enc_grad == nullptr && dec_grad == nullptr) return out;

    auto dbw = generator_backward(vae.decoder, dfw, g_out, true);
    if (dec_grad != nullptr) *dec_grad = std::move(dbw.params);
    Tensor2 g_enc(n, 2 * d);
    const double w = vae.kl_weight;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double mu = efw.output(i, j);
            const double lv = efw.output(i, d + j);
            const double gz = dbw.input(i, j);
            g_enc(i, j) = gz + w * mu * inv_n;
            g_enc(i, d + j) = gz * eps(i, j) * 0.5 * std::exp(0.5 * lv) + w * 0.5 * (std::exp(lv) - 1.0) * inv_n;
        }
    }
    if (enc_grad != nullptr) *enc_grad = mlp_backward(vae.encoder, efw.tape, g_enc, true).params;
    return out;
}

} // namespace

VaeLosses vae_losses(const VaePrior& vae, const Tensor2& real, std::uint64_t seed) {
    return run(vae, real, seed, nullptr, nullptr);
}

VaeLosses vae_loss_grad(const VaePrior& vae, const Tensor2& real, std::uint64_t seed, MlpParams& encoder_grad,
                        MlpParams& decoder_grad) {
    return run(vae, real, seed, &encoder_grad, &decoder_grad);
}

} // namespace appp
