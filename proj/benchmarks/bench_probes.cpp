#include "poselab/probes.hpp"
#include "poselab/rng.hpp"

#include <benchmark/benchmark.h>

using namespace poselab;

namespace {

FeatureMatrix random_features(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    FeatureMatrix f;
    f.rows = rows;
    f.cols = cols;
    f.values.resize(static_cast<std::size_t>(rows * cols));
    f.category.resize(static_cast<std::size_t>(rows));
    f.angle_deg.resize(static_cast<std::size_t>(rows));
    f.instance_key.resize(static_cast<std::size_t>(rows));
    Rng rng(seed);
    for (auto& v : f.values) v = rng.uniform(-1.0, 1.0);
    for (std::int64_t r = 0; r < rows; ++r) {
        f.category[static_cast<std::size_t>(r)] = static_cast<int>(r % 4);
        f.angle_deg[static_cast<std::size_t>(r)] = rng.uniform(0.0, 360.0);
        f.instance_key[static_cast<std::size_t>(r)] = r / 32;
    }
    return f;
}

void kernel_ridge_solve(benchmark::State& state) {
    const auto train = random_features(state.range(0), 256, 1);
    const auto test = random_features(128, 256, 2);
    const KernelConfig kc;
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernel_ridge_pose_probe(train, test, kc));
    }
}
BENCHMARK(kernel_ridge_solve)->Arg(128)->Arg(512);

void knn_pose_bench(benchmark::State& state) {
    const auto train = random_features(512, 256, 1);
    const auto test = random_features(128, 256, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(knn_pose(train, test, 9));
    }
}
BENCHMARK(knn_pose_bench);

void median_bandwidth(benchmark::State& state) {
    const auto f = random_features(512, 256, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(median_heuristic_bandwidth(f));
    }
}
BENCHMARK(median_bandwidth);

void view_manifold_svd(benchmark::State& state) {
    const auto f = random_features(256, 256, 1);  // 8 instances of 32 views
    for (auto _ : state) {
        benchmark::DoNotOptimize(effective_sv_90(f));
        benchmark::DoNotOptimize(nuclear_norm(f));
    }
}
BENCHMARK(view_manifold_svd);

void pegasos(benchmark::State& state) {
    const auto train = random_features(256, 256, 1);
    const auto test = random_features(64, 256, 2);
    LinearProbeConfig cfg;
    cfg.iterations = 5000;
    for (auto _ : state) {
        benchmark::DoNotOptimize(linear_category_probe(train, test, cfg));
    }
}
BENCHMARK(pegasos);

}  // namespace
