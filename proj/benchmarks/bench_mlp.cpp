#include "appp/mlp.hpp"
#include "appp/prior_models.hpp"
#include "appp/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace appp;

Tensor2 random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor2 t(n, d);
    for (auto& v : t.values()) v = standard_normal(rng);
    return t;
}

void BM_MlpForwardBackward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const auto batch = static_cast<std::size_t>(state.range(1));
    const Mlp net = Mlp::create({{32, width, width, 63}, Activation::leaky_relu(), Activation::tanh(), 1});
    const Tensor2 x = random_batch(batch, 32, 2);
    const Tensor2 g(batch, 63, 1.0);
    for (auto _ : state) {
        const auto fw = mlp_forward(net, x);
        benchmark::DoNotOptimize(mlp_backward(net, fw.tape, g));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_MlpForwardBackward)->Args({64, 64})->Args({512, 64})->Args({512, 256});

void BM_GanStep(benchmark::State& state) {
    const ParamLayout layout{ParamSpace::pose_only, 21, 10};
    const Generator g = Generator::create({LatentKind::spherical, 32}, layout, {64, 64}, 1);
    const DiscriminatorBank bank = DiscriminatorBank::create(layout, {32, 32}, 2);
    const Tensor2 z = random_batch(64, 32, 3);
    MlpParams grad = g.net.params.zeros_like();
    for (auto _ : state) benchmark::DoNotOptimize(generator_loss_grad(g, bank, z, &grad));
}
BENCHMARK(BM_GanStep);

} // namespace
