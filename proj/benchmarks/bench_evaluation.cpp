#include "appp/evaluation.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace appp;

void BM_NearestNeighbors(benchmark::State& state) {
    const KinematicTree tree = build_body();
    const ManifoldSpec spec = build_manifold(1);
    const auto pool_n = static_cast<std::size_t>(state.range(0));
    const Tensor2 pool = pose_meshes(tree, sample_corpus(spec, pool_n, 1, Split::train).poses);
    const Tensor2 queries = pose_meshes(tree, sample_corpus(spec, 64, 1, Split::test).poses);
    NnOptions opt;
    opt.parallel = state.range(1) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbors(queries, pool, opt));
    state.SetItemsProcessed(state.iterations() * 64 * static_cast<std::int64_t>(pool_n));
}
BENCHMARK(BM_NearestNeighbors)->Args({4096, 0})->Args({4096, 1})->Args({32768, 1})->Unit(benchmark::kMillisecond);

void BM_NearestNeighborsBrute(benchmark::State& state) {
    const KinematicTree tree = build_body();
    const ManifoldSpec spec = build_manifold(1);
    const Tensor2 pool = pose_meshes(tree, sample_corpus(spec, 4096, 1, Split::train).poses);
    const Tensor2 queries = pose_meshes(tree, sample_corpus(spec, 64, 1, Split::test).poses);
    for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbors_brute(queries, pool));
}
BENCHMARK(BM_NearestNeighborsBrute)->Unit(benchmark::kMillisecond);

} // namespace
