#include "appp/latent_fit.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace appp;

void BM_FitObjective(benchmark::State& state) {
    const KinematicTree tree = build_body();
    const ParamLayout layout{ParamSpace::pose_only, 21, 10};
    const Generator g = Generator::create({LatentKind::spherical, 32}, layout, {64, 64}, 1);
    FitProblem p;
    p.prior = &g;
    p.tree = &tree;
    p.camera = Camera::frontal();
    p.targets = project_points(p.camera, pose_joints(tree, generate(g, sample(g.latent, 2)).pose));
    const LatentVector z = sample(g.latent, 3);
    for (auto _ : state) benchmark::DoNotOptimize(fit_objective(p, z.values));
}
BENCHMARK(BM_FitObjective);

void BM_FitKeypoints(benchmark::State& state) {
    const KinematicTree tree = build_body();
    const ParamLayout layout{ParamSpace::pose_only, 21, 10};
    const Generator g = Generator::create({LatentKind::spherical, 32}, layout, {64, 64}, 1);
    FitProblem p;
    p.prior = &g;
    p.tree = &tree;
    p.camera = Camera::frontal();
    p.targets = project_points(p.camera, pose_joints(tree, generate(g, sample(g.latent, 2)).pose));
    const LbfgsConfig config{40, static_cast<std::size_t>(state.range(0))};
    for (auto _ : state) benchmark::DoNotOptimize(fit_keypoints(p, config, 1, 4));
}
BENCHMARK(BM_FitKeypoints)->Arg(100)->Unit(benchmark::kMillisecond);

} // namespace
