#include "doctest.h"
#include "support.hpp"

#include "appp/errors.hpp"
#include "appp/pose_corpus.hpp"
#include "appp/prior_models.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace appp;
using appp::test::normal_tensor;

namespace {

constexpr double kLn2 = std::numbers::ln2;

ParamLayout small_layout(ParamSpace space = ParamSpace::pose_only) { return {space, 3, 2}; }

// Concatenates every bank net's parameters.
std::vector<double> flatten_bank(const DiscriminatorBank& bank) {
    std::vector<double> out;
    for (const auto& n : bank.nets) {
        const auto f = n.params.flatten();
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

void assign_bank(DiscriminatorBank& bank, std::span<const double> flat) {
    std::size_t off = 0;
    for (auto& n : bank.nets) {
        const std::size_t c = n.params.param_count();
        n.params.assign(flat.subspan(off, c));
        off += c;
    }
}

Tensor2 random_params(Rng& rng, const ParamLayout& l, std::size_t n) {
    Tensor2 t(n, l.output_dim());
    for (auto& v : t.values()) v = uniform(rng, -1.5, 1.5);
    return t;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("appp_test_" + name)).string();
}

TrainingData circle_data(std::size_t n, std::uint64_t seed) { return {circle_corpus(n, seed), "circle"}; }

GanTrainConfig tiny_gan(std::size_t steps, std::uint64_t seed) {
    GanTrainConfig c;
    c.latent = {LatentKind::spherical, 4};
    c.layout = {ParamSpace::pose_only, kCircleJoints, 10};
    c.generator_hidden = {8};
    c.discriminator_hidden = {8};
    c.batch_size = 8;
    c.generator_steps = steps;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("parameter layouts and bank cardinality") {
    const ParamLayout pose{ParamSpace::pose_only, 21, 10};
    const ParamLayout shape{ParamSpace::shape_only, 21, 10};
    const ParamLayout both{ParamSpace::pose_and_shape, 21, 10};
    CHECK(pose.output_dim() == 63);
    CHECK(shape.output_dim() == 10);
    CHECK(both.output_dim() == 73);
    CHECK(pose.discriminator_count() == 22);
    CHECK(shape.discriminator_count() == 1);
    CHECK(both.discriminator_count() == 24);
    for (const auto& l : {pose, shape, both}) {
        CHECK(DiscriminatorBank::create(l, {4}, 1).size() == l.discriminator_count());
        CHECK(param_space_from_string(to_string(l.space)) == l.space);
    }
}

TEST_CASE("generator output is bounded and deterministic") {
    const ParamLayout layout{ParamSpace::pose_and_shape, 21, 10};
    const Generator g = Generator::create({LatentKind::normal, 32}, layout, {32, 32}, 5);
    const Generator g2 = Generator::create({LatentKind::normal, 32}, layout, {32, 32}, 5);
    CHECK(g.net.params == g2.net.params);

    LatentVector zero{std::vector<double>(32, 0.0), g.latent};
    const auto p0 = generate(g, zero);
    for (double v : p0.pose.values) CHECK(std::abs(v) < std::numbers::pi);
    CHECK(p0.shape.values.size() == 10);

    Rng rng(6);
    std::size_t out_of_range = 0;
    const auto scale = g.output_scale();
    for (int chunk = 0; chunk < 100; ++chunk) {
        const Tensor2 out = generate_batch(g, normal_tensor(rng, 10000, 32, 3.0));
        for (std::size_t r = 0; r < out.rows(); ++r) {
            for (std::size_t c = 0; c < out.cols(); ++c) out_of_range += std::abs(out(r, c)) < scale[c] ? 0 : 1;
        }
    }
    CHECK(out_of_range == 0);

    const auto z = sample(g.latent, 9);
    CHECK(generate(g, z).pose == generate(g2, z).pose);
    LatentVector wrong{std::vector<double>(32, 0.0), {LatentKind::spherical, 32}};
    CHECK_THROWS_AS(generate(g, wrong), SpaceError);
    LatentVector off_sphere{std::vector<double>(32, 0.5), {LatentKind::spherical, 32}};
    const Generator gs = Generator::create({LatentKind::spherical, 32}, layout, {8}, 1);
    CHECK_THROWS_AS(generate(gs, off_sphere), SpaceError);
}

TEST_CASE("generator backward agrees with finite differences") {
    const ParamLayout layout = small_layout(ParamSpace::pose_and_shape);
    const Generator g = Generator::create({LatentKind::normal, 4}, layout, {6, 5}, 2);
    Rng rng(3);
    const Tensor2 z = normal_tensor(rng, 3, 4);
    const Tensor2 w = normal_tensor(rng, 3, layout.output_dim());
    ScalarFunction f = [&](std::span<const double> p, std::span<double> grad) {
        Generator h = g;
        h.net.params.assign(p);
        const auto fw = generator_forward(h, z);
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w.values()[i] * fw.output.values()[i];
        if (!grad.empty()) {
            const auto gp = generator_backward(h, fw, w).params.flatten();
            std::copy(gp.begin(), gp.end(), grad.begin());
        }
        return s;
    };
    CHECK(grad_check(f, g.net.params.flatten(), 1e-4).passed);
}

TEST_CASE("gan losses with an indifferent discriminator") {
    const ParamLayout layout = small_layout();
    DiscriminatorBank bank = DiscriminatorBank::create(layout, {4}, 1);
    for (auto& n : bank.nets) n.params = n.params.zeros_like();
    Rng rng(4);
    const auto l = gan_losses(bank, random_params(rng, layout, 5), random_params(rng, layout, 7));
    REQUIRE(l.d_loss_per_net.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(l.d_loss_per_net[i] == doctest::Approx(2 * kLn2).epsilon(1e-14));
        CHECK(l.g_loss_per_net[i] == doctest::Approx(kLn2).epsilon(1e-14));
    }
    CHECK(l.d_loss == doctest::Approx(8 * kLn2).epsilon(1e-14));
    CHECK_THROWS_AS(gan_losses(bank, Tensor2(0, 9), random_params(rng, layout, 2)), BatchError);
}

TEST_CASE("gan losses with a near-perfect discriminator tend to zero") {
    const ParamLayout layout{ParamSpace::pose_only, 1, 10};
    const Tensor2 real(4, 3, 0.0);
    Tensor2 fake(4, 3, 0.0);
    for (std::size_t r = 0; r < 4; ++r) fake(r, 0) = std::numbers::pi / 2;
    const Tensor2 fr = discriminator_features(layout, real);
    const Tensor2 ff = discriminator_features(layout, fake);
    double prev = std::numeric_limits<double>::infinity();
    for (double c : {1.0, 10.0, 100.0}) {
        DiscriminatorBank bank = DiscriminatorBank::create(layout, {}, 2);
        for (auto& n : bank.nets) {
            // logit = c (f_r - f_f) . (f - (f_r + f_f) / 2)
            double b = 0.0;
            for (std::size_t j = 0; j < 9; ++j) {
                const double dj = fr(0, j) - ff(0, j);
                n.params.layers[0].weight(0, j) = c * dj;
                b -= c * dj * 0.5 * (fr(0, j) + ff(0, j));
            }
            n.params.layers[0].bias = {b};
        }
        const double d = gan_losses(bank, real, fake).d_loss;
        CHECK(d < prev);
        CHECK(d > 0.0);
        prev = d;
    }
    CHECK(prev < 1e-12);
}

TEST_CASE("discriminator and generator loss gradients agree with finite differences") {
    for (auto space : {ParamSpace::pose_only, ParamSpace::pose_and_shape, ParamSpace::shape_only}) {
        const ParamLayout layout = small_layout(space);
        const DiscriminatorBank bank = DiscriminatorBank::create(layout, {5}, 3);
        Rng rng(5);
        const Tensor2 rf = discriminator_features(layout, random_params(rng, layout, 4));
        const Tensor2 ff = discriminator_features(layout, random_params(rng, layout, 3));
        ScalarFunction fd = [&](std::span<const double> p, std::span<double> grad) {
            DiscriminatorBank b = bank;
            assign_bank(b, p);
            std::vector<MlpParams> g;
            const double loss = discriminator_loss_grad(b, rf, ff, g);
            if (!grad.empty()) {
                std::size_t off = 0;
                for (const auto& gi : g) {
                    const auto f = gi.flatten();
                    std::copy(f.begin(), f.end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
                    off += f.size();
                }
            }
            return loss;
        };
        CHECK(grad_check(fd, flatten_bank(bank), 1e-4).passed);

        const Generator gen = Generator::create({LatentKind::normal, 3}, layout, {6}, 4);
        const Tensor2 z = normal_tensor(rng, 4, 3);
        ScalarFunction fg = [&](std::span<const double> p, std::span<double> grad) {
            Generator h = gen;
            h.net.params.assign(p);
            MlpParams g;
            const double loss = generator_loss_grad(h, bank, z, grad.empty() ? nullptr : &g);
            if (!grad.empty()) {
                const auto f = g.flatten();
                std::copy(f.begin(), f.end(), grad.begin());
            }
            return loss;
        };
        CHECK(grad_check(fg, gen.net.params.flatten(), 1e-4).passed);

        // the loss value matches gan_losses on the generated batch
        const double gl = generator_loss_grad(gen, bank, z, nullptr);
        const auto fake = generate_batch(gen, z);
        CHECK(gl == doctest::Approx(gan_losses(bank, fake, fake).g_loss).epsilon(1e-12));
    }
}

TEST_CASE("train_gan runs d_steps discriminator updates per generator update") {
    for (std::size_t r : {1u, 3u, 10u}) {
        GanTrainConfig c = tiny_gan(4, 7);
        c.d_steps_per_g_step = r;
        std::size_t hook_calls = 0;
        const auto res = train_gan(c, circle_data(64, 1), "gan-s",
                                   [&](std::size_t, Generator&, DiscriminatorBank&) { ++hook_calls; });
        CHECK(res.checkpoint.generator_updates == 4);
        CHECK(res.checkpoint.discriminator_updates == r * 4);
        CHECK(hook_calls == 4);
    }
    GanTrainConfig bad = tiny_gan(1, 1);
    bad.d_steps_per_g_step = 0;
    CHECK_THROWS_AS(train_gan(bad, circle_data(8, 1)), ConfigError);
    CHECK_THROWS_AS(train_gan(tiny_gan(1, 1), TrainingData{Tensor2(0, 6), "x"}), Error);
}

TEST_CASE("train_gan is deterministic and seed-sensitive") {
    const auto data = circle_data(64, 2);
    const auto a = train_gan(tiny_gan(3, 11), data);
    const auto b = train_gan(tiny_gan(3, 11), data);
    const auto c = train_gan(tiny_gan(3, 12), data);
    CHECK(a.checkpoint.params_hash() == b.checkpoint.params_hash());
    CHECK(a.checkpoint.params_hash() != c.checkpoint.params_hash());
    CHECK(a.checkpoint.config_hash == c.checkpoint.config_hash);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].value == b.trace[i].value);
}

TEST_CASE("train_gan aborts on non-finite values and keeps the last good checkpoint") {
    const auto data = circle_data(64, 3);
    auto hook = [](std::size_t step, Generator& g, DiscriminatorBank&) {
        if (step == 2) g.net.params.layers[0].weight(0, 0) = std::nan("");
    };
    try {
        train_gan(tiny_gan(6, 1), data, "gan-s", hook);
        FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
        CHECK(e.last_good().generator.has_value());
        CHECK(e.last_good().generator->net.params.all_finite());
        CHECK(e.last_good().generator_updates == 2);
        CHECK_FALSE(e.trace().empty());
    }
}

TEST_CASE("VAE KL closed forms") {
    const ParamLayout layout = small_layout();
    VaePrior vae = VaePrior::create({LatentKind::normal, 3}, layout, {6}, 5e-3, 1);
    Rng rng(8);
    const Tensor2 real = random_params(rng, layout, 5);
    auto& last = vae.encoder.params.layers.back();
    last.weight.fill(0.0);
    last.bias.assign(6, 0.0);
    CHECK(vae_losses(vae, real, 1).kl == doctest::Approx(0.0));
    last.bias = {0.5, -1.0, 2.0, 0.0, 0.0, 0.0};
    CHECK(vae_losses(vae, real, 1).kl == doctest::Approx(0.5 * (0.25 + 1.0 + 4.0)).epsilon(1e-14));
    CHECK_THROWS_AS(vae_losses(vae, Tensor2(0, 9), 1), BatchError);
    CHECK_THROWS_AS(VaePrior::create({LatentKind::spherical, 3}, layout, {6}, 5e-3, 1), ConfigError);
}

TEST_CASE("VAE KL matches a Monte-Carlo estimate") {
    const ParamLayout layout = small_layout();
    VaePrior vae = VaePrior::create({LatentKind::normal, 2}, layout, {6}, 5e-3, 1);
    auto& last = vae.encoder.params.layers.back();
    last.weight.fill(0.0);
    const std::vector<double> mu{0.7, -0.4}, lv{-0.5, 0.8};
    last.bias = {mu[0], mu[1], lv[0], lv[1]};
    Rng rng(9);
    const double kl = vae_losses(vae, random_params(rng, layout, 1), 2).kl;
    const std::size_t n = 100000;
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            const double sd = std::exp(0.5 * lv[j]);
            const double e = standard_normal(rng);
            const double z = mu[j] + sd * e;
            // log q(z) - log p(z)
            v += -0.5 * e * e - std::log(sd) + 0.5 * z * z;
        }
        s += v;
        ss += v * v;
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::abs(mean - kl) < 3 * se);
}

TEST_CASE("VAE loss gradient agrees with finite differences") {
    const ParamLayout layout = small_layout();
    const VaePrior vae = VaePrior::create({LatentKind::normal, 3}, layout, {5}, 0.3, 2);
    Rng rng(10);
    const Tensor2 real = random_params(rng, layout, 4);
    const std::size_t ne = vae.encoder.params.param_count();
    std::vector<double> p = vae.encoder.params.flatten();
    const auto dp = vae.decoder.net.params.flatten();
    p.insert(p.end(), dp.begin(), dp.end());
    ScalarFunction f = [&](std::span<const double> x, std::span<double> grad) {
        VaePrior v = vae;
        v.encoder.params.assign(x.first(ne));
        v.decoder.net.params.assign(x.subspan(ne));
        MlpParams ge, gd;
        const auto l = vae_loss_grad(v, real, 77, ge, gd);
        if (!grad.empty()) {
            const auto a = ge.flatten(), b = gd.flatten();
            std::copy(a.begin(), a.end(), grad.begin());
            std::copy(b.begin(), b.end(), grad.begin() + static_cast<std::ptrdiff_t>(ne));
        }
        return l.total;
    };
    CHECK(grad_check(f, p, 1e-4).passed);
}

TEST_CASE("GMM: one component is the sample mean and variance") {
    Rng rng(11);
    const Tensor2 data = normal_tensor(rng, 500, 4, 2.0);
    const auto fit = gmm_fit_em(data, 1, 3);
    std::vector<double> mean(4, 0.0), var(4, 0.0);
    for (std::size_t r = 0; r < 500; ++r) {
        for (std::size_t c = 0; c < 4; ++c) mean[c] += data(r, c) / 500.0;
    }
    for (std::size_t r = 0; r < 500; ++r) {
        for (std::size_t c = 0; c < 4; ++c) var[c] += (data(r, c) - mean[c]) * (data(r, c) - mean[c]) / 500.0;
    }
    CHECK(fit.gmm.weights[0] == doctest::Approx(1.0));
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(std::abs(fit.gmm.means(0, c) - mean[c]) < 1e-10);
        CHECK(std::abs(fit.gmm.variances(0, c) - var[c]) < 1e-10);
    }
}

TEST_CASE("GMM: two blobs are recovered and EM is monotone") {
    Rng rng(12);
    const std::vector<double> m1{2.0, -1.0, 0.5}, m2{-2.0, 1.5, -0.5};
    Tensor2 data(2000, 3);
    for (std::size_t r = 0; r < 2000; ++r) {
        const auto& m = r % 2 ? m1 : m2;
        for (std::size_t c = 0; c < 3; ++c) data(r, c) = m[c] + 0.2 * standard_normal(rng);
    }
    const auto fit = gmm_fit_em(data, 2, 5);
    const std::size_t a = fit.gmm.means(0, 0) > 0 ? 0 : 1;
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(fit.gmm.means(a, c) - m1[c]) < 0.05);
        CHECK(std::abs(fit.gmm.means(1 - a, c) - m2[c]) < 0.05);
    }
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
        CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9);
    }
    double w = 0.0;
    for (double x : fit.gmm.weights) w += x;
    CHECK(std::abs(w - 1.0) < 1e-12);
    CHECK_THROWS(gmm_fit_em(Tensor2(1, 3, 0.0), 2, 1));
}

TEST_CASE("GMM: collapsed components are floored with a warning") {
    Tensor2 data(10, 2, 1.0); // all points identical
    const auto fit = gmm_fit_em(data, 2, 1);
    for (double v : fit.gmm.variances.values()) CHECK(v >= kGmmVarianceFloor);
    CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("GMM negative log density") {
    GmmPrior g;
    g.weights = {1.0};
    g.means = Tensor2(1, 3, std::vector<double>{0.1, -0.2, 0.3});
    g.variances = Tensor2(1, 3, std::vector<double>{0.5, 2.0, 0.1});
    double peak = 0.0;
    for (double v : g.variances.values()) peak += 0.5 * std::log(2 * std::numbers::pi * v);
    CHECK(gmm_neg_log_prob(g, g.means.row(0)) == doctest::Approx(peak).epsilon(1e-14));

    const std::vector<double> dir{1.0, 0.5, -2.0};
    double prev = std::numeric_limits<double>::infinity();
    for (double s = 3.0; s >= 0.0; s -= 0.25) {
        std::vector<double> x(3);
        for (std::size_t c = 0; c < 3; ++c) x[c] = g.means(0, c) + s * dir[c];
        const double v = gmm_neg_log_prob(g, x);
        CHECK(v < prev);
        prev = v;
    }

    Rng rng(13);
    GmmPrior mix;
    mix.weights = {0.3, 0.7};
    mix.means = normal_tensor(rng, 2, 3);
    mix.variances = Tensor2(2, 3, std::vector<double>{0.4, 0.9, 1.3, 0.2, 0.6, 1.1});
    ScalarFunction f = [&](std::span<const double> x, std::span<double> grad) { return gmm_neg_log_prob(mix, x, grad); };
    for (int i = 0; i < 10; ++i) CHECK(grad_check(f, test::normal_vector(rng, 3), 1e-4).passed);
    // far from every mean: log-sum-exp stays finite
    CHECK(std::isfinite(gmm_neg_log_prob(mix, std::vector<double>{300.0, -300.0, 300.0})));
}

TEST_CASE("GMM samples are clamped and seeded") {
    GmmPrior g;
    g.weights = {1.0};
    g.means = Tensor2(1, 3, std::vector<double>{3.0, 0.0, -3.0});
    g.variances = Tensor2(1, 3, 1.0);
    const Tensor2 s = gmm_sample(g, 1000, 4);
    for (double v : s.values()) CHECK(std::abs(v) <= std::numbers::pi);
    CHECK(s == gmm_sample(g, 1000, 4));
}

TEST_CASE("checkpoint JSON round trip reproduces generate bit for bit") {
    const auto res = train_gan(tiny_gan(2, 3), circle_data(32, 4), "gan-s");
    const Checkpoint& ck = res.checkpoint;
    const std::string path = temp_path("ckpt.json");
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.params_hash() == ck.params_hash());
    CHECK(back.prior_name == "gan-s");
    CHECK(back.discriminator_updates == ck.discriminator_updates);
    CHECK(checkpoint_to_json(back) == checkpoint_to_json(ck));
    for (std::uint64_t i = 0; i < 100; ++i) {
        const auto z = sample(ck.require_generator().latent, derive_seed(1, "probe", i));
        CHECK(generate(back.require_generator(), z).pose == generate(ck.require_generator(), z).pose);
    }

    const std::string text = checkpoint_to_json(ck);
    CHECK_THROWS_AS(checkpoint_from_json(text.substr(0, text.size() / 2)), ParseError);
    {
        std::ofstream out(path, std::ios::trunc);
        out << text.substr(0, text.size() - 10);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);

    std::string bumped = text;
    bumped.replace(bumped.find("\"format_version\": 1"), 19, "\"format_version\": 2");
    try {
        checkpoint_from_json(bumped);
        FAIL("expected VersionError");
    } catch (const VersionError& e) {
        CHECK(e.expected() == 1);
        CHECK(e.found() == 2);
        CHECK(std::string(e.what()).find('2') != std::string::npos);
    }

    std::string tampered = text;
    const auto w = tampered.find("\"weight\"");
    REQUIRE(w != std::string::npos);
    const auto digit = tampered.find_first_of("123456789", w);
    tampered[digit] = tampered[digit] == '9' ? '8' : static_cast<char>(tampered[digit] + 1);
    CHECK_THROWS_AS(checkpoint_from_json(tampered), ParseError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("does-not-exist.json")), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("VAE and GMM checkpoints round trip") {
    const auto data = make_training_data(sample_corpus(build_manifold(1, {4, 3}), 64, 2, Split::train),
                                         {ParamSpace::pose_only, 3, 10}, 3);
    VaeTrainConfig vc;
    vc.latent = {LatentKind::normal, 4};
    vc.layout = {ParamSpace::pose_only, 3, 10};
    vc.hidden = {8};
    vc.steps = 5;
    vc.batch_size = 8;
    const auto vae = train_vae(vc, data).checkpoint;
    const auto vb = checkpoint_from_json(checkpoint_to_json(vae));
    CHECK(vb.params_hash() == vae.params_hash());
    CHECK(vb.encoder.has_value());
    CHECK(vb.kl_weight == vae.kl_weight);
    CHECK(sample_params(vb, 10, 5) == sample_params(vae, 10, 5));

    const auto gmm = train_gmm({2, 50, 1}, data, vc.layout).checkpoint;
    const auto gb = checkpoint_from_json(checkpoint_to_json(gmm));
    CHECK(gb.params_hash() == gmm.params_hash());
    CHECK(sample_params(gb, 10, 5) == sample_params(gmm, 10, 5));
    CHECK(gmm.corpus_fingerprint == data.fingerprint);
}
