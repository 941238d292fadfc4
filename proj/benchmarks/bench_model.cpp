#include "poselab/harness.hpp"
#include "poselab/synth_data.hpp"

#include <benchmark/benchmark.h>

using namespace poselab;

namespace {

ExperimentConfig desk_config(ModelFamily family) {
    ExperimentConfig cfg;
    cfg.kind.family = family;
    cfg.labels = {4, 16};
    return cfg;
}

Dataset::Batch random_batch(std::int64_t n, int size, std::uint64_t seed) {
    Dataset::Batch batch;
    batch.images = Tensor({n, 3, size, size});
    Rng rng(seed);
    for (auto& v : batch.images.data) v = rng.uniform(0.0, 1.0);
    batch.category.resize(static_cast<std::size_t>(n));
    batch.pose_bin.resize(static_cast<std::size_t>(n));
    batch.angle_deg.resize(static_cast<std::size_t>(n));
    batch.sample_ids.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        batch.category[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(4));
        batch.pose_bin[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(16));
        batch.angle_deg[static_cast<std::size_t>(i)] = rng.uniform(0.0, 360.0);
        batch.sample_ids[static_cast<std::size_t>(i)] = i;
    }
    return batch;
}

// one optimizer step of the desk model: forward, joint loss, backward, sgd
void train_iteration(benchmark::State& state) {
    const auto family = static_cast<ModelFamily>(state.range(0));
    const ExperimentConfig cfg = desk_config(family);
    JointModel model = JointModel::create(cfg);
    const auto batch = random_batch(32, cfg.profile.image_size, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.train_step(batch, 1.0, 1.0));
        model.sgd_update(1e-3, 0.9, 1e-4);
        model.zero_grads();
    }
}
BENCHMARK(train_iteration)
    ->Arg(static_cast<int>(ModelFamily::CPM))
    ->Arg(static_cast<int>(ModelFamily::LBM))
    ->Arg(static_cast<int>(ModelFamily::EBM));

void eval_forward(benchmark::State& state) {
    const ExperimentConfig cfg = desk_config(ModelFamily::EBM);
    JointModel model = JointModel::create(cfg);
    const auto batch = random_batch(64, cfg.profile.image_size, 7);
    std::vector<std::vector<double>> cat_dist;
    std::vector<PoseDistribution> pose_dist;
    for (auto _ : state) {
        model.predict(batch.images, cat_dist, pose_dist);
        benchmark::DoNotOptimize(cat_dist);
    }
}
BENCHMARK(eval_forward);

void render(benchmark::State& state) {
    DataConfig dc;
    const ObjectInstance inst = make_instance(dc, 1, 2);
    double angle = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(render_view(inst, angle, 36));
        angle += 17.0;
    }
}
BENCHMARK(render);

}  // namespace
