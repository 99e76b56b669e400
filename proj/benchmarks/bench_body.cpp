#include "appp/body_model.hpp"
#include "appp/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace appp;

PoseVector random_pose(const KinematicTree& tree, std::uint64_t seed) {
    Rng rng(seed);
    PoseVector p = PoseVector::zeros(tree.joint_count());
    for (auto& v : p.values) v = uniform(rng, -0.5, 0.5);
    return p;
}

void BM_Skin(benchmark::State& state) {
    const KinematicTree tree = build_body();
    const PoseVector pose = random_pose(tree, 1);
    const ShapeVector shape = ShapeVector::zeros(tree.shape_dim());
    for (auto _ : state) benchmark::DoNotOptimize(skin(tree, pose, shape));
}
BENCHMARK(BM_Skin);

void BM_SkinPoseVjp(benchmark::State& state) {
    const KinematicTree tree = build_body();
    const PoseVector pose = random_pose(tree, 1);
    const ShapeVector shape = ShapeVector::zeros(tree.shape_dim());
    const Tensor2 gv(tree.vertex_count(), 3, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(skin_pose_vjp(tree, pose, shape, gv, Tensor2()));
}
BENCHMARK(BM_SkinPoseVjp);

} // namespace
