#pragma once

#include "poselab/checkpoint.hpp"
#include "poselab/layers.hpp"
#include "poselab/rng.hpp"
#include "poselab/topology.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace poselab {

struct LayerState {
    LayerSpec spec;
    Parameter weights;  // unused for non-parametric layers
    Parameter bias;
    Rng drop_rng{0};  // consumed only by dropout layers in train phase
};

struct LayerCache {
    Tensor input;
    Tensor extra;  // dropout mask / LRN scale
};

struct ForwardCache {
    Phase phase = Phase::Train;
    std::vector<LayerCache> shared;
    std::vector<std::vector<LayerCache>> branches;
};

// One runtime network built from a TopologySpec. PM uses two of these.
class Network {
  public:
    Network(const TopologySpec& spec, std::uint64_t seed);

    const TopologySpec& spec() const { return spec_; }

    // Per-branch logits, in TopologySpec branch order. `cache` is required for backward.
    std::vector<Tensor> forward(const Tensor& batch, Phase phase,
                                ForwardCache* cache = nullptr);

    // Accumulates parameter gradients; dlogits must carry any loss weights already.
    void backward(const ForwardCache& cache, const std::vector<Tensor>& dlogits);

    void zero_grads();

    // Stable order: shared prefix first, then branches; weights before bias per layer.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

    std::vector<CheckpointRecord> to_records(const std::string& prefix = "") const;
    void load_records(const std::vector<CheckpointRecord>& records,
                      const std::string& prefix = "");

    // Warm start from a smaller model's records. EBM: trunk convolutions plus category-branch fc6/fc7
    // copied, pose branch and both heads kept random. Other kinds: every pre-head layer
    // copied, heads kept random. Copied layers keep lr_scale 1, fresh layers get 10.
    void warm_start_from(const std::vector<CheckpointRecord>& records);

    // Eval-phase forward returning ("input", batch) then (layer name, activation) for
    // every named layer in topology order.
    std::vector<std::pair<std::string, Tensor>> forward_with_activations(const Tensor& batch);

    std::vector<std::string> layer_names() const;  // "input" + every named layer

  private:
    LayerState make_state(const LayerSpec& layer, std::uint64_t seed);
    void init_params(std::uint64_t seed);

    TopologySpec spec_;
    std::vector<LayerState> shared_;
    std::vector<std::vector<LayerState>> branches_;
};

Network instantiate(const TopologySpec& spec, std::uint64_t seed,
                    const std::optional<std::string>& warm_start_path = std::nullopt);

}  // namespace poselab
