#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace appp::cli {

enum class Scale { desk, full };

/// Everything --scale switches. Individual flags still override single fields.
struct Preset {
    std::vector<std::size_t> generator_hidden;
    std::vector<std::size_t> discriminator_hidden;
    std::vector<std::size_t> vae_hidden;
    std::vector<std::size_t> regressor_hidden;
    std::size_t latent_dim = 32;
    std::size_t batch_size = 64;
    std::size_t gan_steps = 800;
    std::size_t vae_steps = 4000;
    std::size_t gmm_components = 8;
    std::size_t regressor_steps = 1500;
    std::size_t n_fakes = 200'000;
    std::size_t n_queries = 2'000;
    std::size_t n_train = 20'000;
    std::size_t n_test = 2'000;
};

inline Preset preset_for(Scale s) {
    Preset p;
    if (s == Scale::desk) {
        p.generator_hidden = {64, 64};
        p.discriminator_hidden = {32, 32};
        p.vae_hidden = {64, 64};
        p.regressor_hidden = {64, 64};
        return p;
    }
    p.generator_hidden = {512, 512};
    p.discriminator_hidden = {512, 512};
    p.vae_hidden = {512, 512};
    p.regressor_hidden = {512, 512};
    p.batch_size = 256;
    p.gan_steps = 50'000;
    p.vae_steps = 50'000;
    p.gmm_components = 32;
    p.regressor_steps = 20'000;
    p.n_fakes = 6'000'000;
    p.n_queries = 10'000;
    p.n_train = 1'000'000;
    p.n_test = 10'000;
    return p;
}

inline std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "full"; }

} // namespace appp::cli
