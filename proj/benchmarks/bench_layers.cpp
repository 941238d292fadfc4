#include "poselab/layers.hpp"
#include "poselab/rng.hpp"

#include <benchmark/benchmark.h>

using namespace poselab;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void conv_forward(benchmark::State& state) {
    const int groups = static_cast<int>(state.range(0));
    const Tensor x = random_tensor({16, 12, 16, 16}, 1);
    const Tensor w = random_tensor({32, 12 / groups, 3, 3}, 2);
    const std::vector<double> bias(32, 0.1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d_forward(x, w, bias, 1, 1, groups));
    }
}
BENCHMARK(conv_forward)->Arg(1)->Arg(2);

void conv_backward(benchmark::State& state) {
    const int groups = static_cast<int>(state.range(0));
    const Tensor x = random_tensor({16, 12, 16, 16}, 1);
    const Tensor w = random_tensor({32, 12 / groups, 3, 3}, 2);
    const std::vector<double> bias(32, 0.1);
    const Tensor y = conv2d_forward(x, w, bias, 1, 1, groups);
    const Tensor dy = random_tensor(y.shape, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d_backward(dy, x, w, 1, 1, groups));
    }
}
BENCHMARK(conv_backward)->Arg(1)->Arg(2);

void fc_round_trip(benchmark::State& state) {
    const Tensor x = random_tensor({32, 288}, 1);
    const Tensor w = random_tensor({256, 288}, 2);
    const std::vector<double> bias(256, 0.0);
    const Tensor dy = random_tensor({32, 256}, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fc_forward(x, w, bias));
        benchmark::DoNotOptimize(fc_backward(dy, x, w));
    }
}
BENCHMARK(fc_round_trip);

void maxpool_forward_bench(benchmark::State& state) {
    const Tensor x = random_tensor({32, 32, 15, 15}, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(maxpool_forward(x, 3, 2));
    }
}
BENCHMARK(maxpool_forward_bench);

void lrn_round_trip(benchmark::State& state) {
    const Tensor x = random_tensor({8, 96, 27, 27}, 1);
    const Tensor dy = random_tensor({8, 96, 27, 27}, 2);
    for (auto _ : state) {
        Tensor scale;
        const Tensor y = lrn_forward(x, 5, 1e-4, 0.75, &scale);
        benchmark::DoNotOptimize(y);
        benchmark::DoNotOptimize(lrn_backward(dy, x, scale, 5, 1e-4, 0.75));
    }
}
BENCHMARK(lrn_round_trip);

void softmax_ce(benchmark::State& state) {
    const Tensor logits = random_tensor({32, 64}, 1);
    std::vector<int> labels(32);
    Rng rng(4);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(64));
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax_ce_batch(logits, labels, 1.0));
    }
}
BENCHMARK(softmax_ce);

}  // namespace
