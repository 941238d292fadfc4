#include "poselab/model.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace poselab {

namespace {

std::uint64_t name_tag(const char* prefix, const std::string& name) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ull;
    };
    for (const char* p = prefix; *p; ++p) mix(static_cast<unsigned char>(*p));
    for (char c : name) mix(static_cast<unsigned char>(c));
    return h;
}

std::vector<std::int64_t> weight_shape(const LayerSpec& layer,
                                       const std::vector<std::int64_t>& in) {
    if (layer.op == LayerOp::Convolution) {
        return {layer.out_channels, in[0] / layer.groups, layer.kernel_h, layer.kernel_w};
    }
    std::int64_t features = 1;
    for (std::int64_t d : in) features *= d;
    return {layer.out_dim, features};
}

std::int64_t fan_in_of(const Tensor& w) {
    std::int64_t f = 1;
    for (int d = 1; d < w.rank(); ++d) f *= w.dim(d);
    return f;
}

}  // namespace

Network::Network(const TopologySpec& spec, std::uint64_t seed) : spec_(spec) {
    infer_shapes(spec_);  // validates the whole layer stack up front

    std::vector<std::int64_t> cur = {spec_.in_channels, spec_.profile.image_size,
                                     spec_.profile.image_size};
    auto build = [&](const LayerSpec& layer) {
        LayerState st;
        st.spec = layer;
        if (layer.has_params()) {
            const auto ws = weight_shape(layer, cur);
            st.weights.name = layer.name + "/w";
            st.weights.value = Tensor(ws);
            st.weights.gradient = Tensor(ws);
            st.weights.momentum_buffer = Tensor(ws);
            const std::int64_t out = ws[0];
            st.bias.name = layer.name + "/b";
            st.bias.value = Tensor({out});
            st.bias.gradient = Tensor({out});
            st.bias.momentum_buffer = Tensor({out});
        }
        if (layer.op == LayerOp::Dropout) {
            st.drop_rng = Rng(mix_seed(seed, name_tag("dropout/", layer.name)));
        }
        // shape bookkeeping mirrors infer_shapes
        switch (layer.op) {
            case LayerOp::Convolution: {
                const std::int64_t oh =
                    (cur[1] + 2 * layer.pad - layer.kernel_h) / layer.stride + 1;
                const std::int64_t ow =
                    (cur[2] + 2 * layer.pad - layer.kernel_w) / layer.stride + 1;
                cur = {layer.out_channels, oh, ow};
                break;
            }
            case LayerOp::MaxPool: {
                const std::int64_t oh = (cur[1] - layer.pool_kernel) / layer.pool_stride + 1;
                const std::int64_t ow = (cur[2] - layer.pool_kernel) / layer.pool_stride + 1;
                cur = {cur[0], oh, ow};
                break;
            }
            case LayerOp::FullyConnected:
            case LayerOp::SoftmaxOutput:
                cur = {layer.out_dim};
                break;
            default:
                break;
        }
        return st;
    };

    for (const auto& layer : spec_.shared_prefix) shared_.push_back(build(layer));
    const auto at_branch = cur;
    for (const auto& branch : spec_.branches) {
        cur = at_branch;
        auto& states = branches_.emplace_back();
        for (const auto& layer : branch.layers) states.push_back(build(layer));
    }
    init_params(seed);
}

void Network::init_params(std::uint64_t seed) {
    auto init_layer = [&](LayerState& st) {
        if (!st.spec.has_params()) return;
        Rng rng(mix_seed(seed, name_tag("init/", st.spec.name)));
        // Full scale keeps the classic fixed 0.01; desk scale trains from scratch,
        // where fan-in scaling is required to keep signal alive through eight layers.
        const double stddev =
            spec_.profile.full ? 0.01 : std::sqrt(2.0 / static_cast<double>(fan_in_of(st.weights.value)));
        for (auto& v : st.weights.value.data) v = rng.gaussian(0.0, stddev);
        for (auto& v : st.bias.value.data) v = 0.0;
        st.weights.lr_scale = 1.0;
        st.bias.lr_scale = 1.0;
    };
    for (auto& st : shared_) init_layer(st);
    for (auto& branch : branches_) {
        for (auto& st : branch) init_layer(st);
    }
}

namespace {

Tensor apply_layer(LayerState& st, const Tensor& in, Phase phase, LayerCache* cache) {
    if (cache) cache->input = in;
    switch (st.spec.op) {
        case LayerOp::Convolution:
            return conv2d_forward(in, st.weights.value, st.bias.value.data, st.spec.stride,
                                  st.spec.pad, st.spec.groups);
        case LayerOp::MaxPool:
            return maxpool_forward(in, st.spec.pool_kernel, st.spec.pool_stride);
        case LayerOp::ReLU:
            return relu_forward(in);
        case LayerOp::LocalResponseNorm:
            return lrn_forward(in, st.spec.lrn_size, st.spec.lrn_alpha, st.spec.lrn_beta,
                               cache ? &cache->extra : nullptr);
        case LayerOp::FullyConnected:
        case LayerOp::SoftmaxOutput:
            return fc_forward(in, st.weights.value, st.bias.value.data);
        case LayerOp::Dropout:
            return dropout_forward(in, st.spec.rate, phase, st.drop_rng,
                                   cache ? &cache->extra : nullptr);
    }
    throw std::logic_error("apply_layer: unhandled op");
}

Tensor backward_layer(LayerState& st, const LayerCache& cache, const Tensor& dout) {
    switch (st.spec.op) {
        case LayerOp::Convolution: {
            Conv2dGrads g = conv2d_backward(dout, cache.input, st.weights.value, st.spec.stride,
                                            st.spec.pad, st.spec.groups);
            for (std::size_t i = 0; i < g.weight_grad.data.size(); ++i) {
                st.weights.gradient.data[i] += g.weight_grad.data[i];
            }
            for (std::size_t i = 0; i < g.bias_grad.size(); ++i) {
                st.bias.gradient.data[i] += g.bias_grad[i];
            }
            return std::move(g.input_grad);
        }
        case LayerOp::MaxPool:
            return maxpool_backward(dout, cache.input, st.spec.pool_kernel,
                                    st.spec.pool_stride);
        case LayerOp::ReLU:
            return relu_backward(dout, cache.input);
        case LayerOp::LocalResponseNorm:
            return lrn_backward(dout, cache.input, cache.extra, st.spec.lrn_size,
                                st.spec.lrn_alpha, st.spec.lrn_beta);
        case LayerOp::FullyConnected:
        case LayerOp::SoftmaxOutput: {
            FcGrads g = fc_backward(dout, cache.input, st.weights.value);
            for (std::size_t i = 0; i < g.weight_grad.data.size(); ++i) {
                st.weights.gradient.data[i] += g.weight_grad.data[i];
            }
            for (std::size_t i = 0; i < g.bias_grad.size(); ++i) {
                st.bias.gradient.data[i] += g.bias_grad[i];
            }
            return std::move(g.input_grad);
        }
        case LayerOp::Dropout:
            return dropout_backward(dout, cache.extra);
    }
    throw std::logic_error("backward_layer: unhandled op");
}

}  // namespace

std::vector<Tensor> Network::forward(const Tensor& batch, Phase phase, ForwardCache* cache) {
    check(batch.rank() == 4, "forward: batch must be NCHW, got " + batch.shape_str());
    check(batch.dim(1) == spec_.in_channels && batch.dim(2) == spec_.profile.image_size &&
              batch.dim(3) == spec_.profile.image_size,
          "forward: batch " + batch.shape_str() + " does not match network input (" +
              std::to_string(spec_.in_channels) + ", " +
              std::to_string(spec_.profile.image_size) + ", " +
              std::to_string(spec_.profile.image_size) + ")");

    if (cache) {
        cache->phase = phase;
        cache->shared.assign(shared_.size(), {});
        cache->branches.assign(branches_.size(), {});
    }

    Tensor cur = batch;
    for (std::size_t i = 0; i < shared_.size(); ++i) {
        cur = apply_layer(shared_[i], cur, phase, cache ? &cache->shared[i] : nullptr);
    }
    const Tensor shared_out = cur;

    std::vector<Tensor> logits;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        if (cache) cache->branches[b].assign(branches_[b].size(), {});
        Tensor bt = shared_out;
        for (std::size_t i = 0; i < branches_[b].size(); ++i) {
            bt = apply_layer(branches_[b][i], bt, phase,
                             cache ? &cache->branches[b][i] : nullptr);
        }
        logits.push_back(std::move(bt));
    }
    return logits;
}

void Network::backward(const ForwardCache& cache, const std::vector<Tensor>& dlogits) {
    check(dlogits.size() == branches_.size(),
          "backward: expected " + std::to_string(branches_.size()) + " logit gradients, got " +
              std::to_string(dlogits.size()));
    check(cache.shared.size() == shared_.size(), "backward: cache does not match this network");

    Tensor shared_grad;
    bool have_shared_grad = false;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        Tensor g = dlogits[b];
        for (std::size_t i = branches_[b].size(); i-- > 0;) {
            g = backward_layer(branches_[b][i], cache.branches[b][i], g);
        }
        if (!have_shared_grad) {
            shared_grad = std::move(g);
            have_shared_grad = true;
        } else {
            check_same_shape(shared_grad, g, "backward: branch-point gradients");
            for (std::size_t i = 0; i < shared_grad.data.size(); ++i) {
                shared_grad.data[i] += g.data[i];
            }
        }
    }
    for (std::size_t i = shared_.size(); i-- > 0;) {
        shared_grad = backward_layer(shared_[i], cache.shared[i], shared_grad);
    }
}

void Network::zero_grads() {
    for (auto* p : parameters()) p->zero_grad();
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    auto add = [&out](LayerState& st) {
        if (!st.spec.has_params()) return;
        out.push_back(&st.weights);
        out.push_back(&st.bias);
    };
    for (auto& st : shared_) add(st);
    for (auto& branch : branches_) {
        for (auto& st : branch) add(st);
    }
    return out;
}

std::vector<const Parameter*> Network::parameters() const {
    std::vector<const Parameter*> out;
    for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
    return out;
}

std::vector<CheckpointRecord> Network::to_records(const std::string& prefix) const {
    std::vector<CheckpointRecord> out;
    for (const auto* p : parameters()) out.push_back({prefix + p->name, p->value});
    return out;
}

void Network::load_records(const std::vector<CheckpointRecord>& records,
                           const std::string& prefix) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& r : records) by_name[r.name] = &r.value;
    for (auto* p : parameters()) {
        auto it = by_name.find(prefix + p->name);
        if (it == by_name.end()) {
            throw std::runtime_error("load_records: checkpoint is missing '" + prefix +
                                     p->name + "'");
        }
        if (it->second->shape != p->value.shape) {
            throw std::runtime_error("load_records: '" + prefix + p->name + "' has shape " +
                                     it->second->shape_str() + ", expected " +
                                     p->value.shape_str());
        }
        p->value = *it->second;
    }
}

void Network::warm_start_from(const std::vector<CheckpointRecord>& records) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& r : records) by_name[r.name] = &r.value;
    const bool ebm = spec_.kind_name == "ebm";

    auto copy_from = [&](LayerState& st, const std::string& source) {
        for (auto* p : {&st.weights, &st.bias}) {
            const std::string want =
                source + (p == &st.weights ? std::string("/w") : std::string("/b"));
            auto it = by_name.find(want);
            if (it == by_name.end()) {
                throw std::runtime_error("warm start: checkpoint is missing '" + want +
                                         "' needed by layer '" + st.spec.name + "'");
            }
            if (it->second->shape != p->value.shape) {
                throw std::runtime_error("warm start: '" + want + "' has shape " +
                                         it->second->shape_str() + " but layer '" +
                                         st.spec.name + "' needs " + p->value.shape_str());
            }
            p->value = *it->second;
            p->lr_scale = 1.0;
            p->warm_started = true;
        }
    };
    auto keep_random = [](LayerState& st) {
        st.weights.lr_scale = 10.0;
        st.bias.lr_scale = 10.0;
        st.weights.warm_started = false;
        st.bias.warm_started = false;
    };

    for (auto& st : shared_) {
        if (st.spec.has_params()) copy_from(st, st.spec.name);
    }
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        const bool pose_branch = spec_.branches[b].name == "pose";
        for (auto& st : branches_[b]) {
            if (!st.spec.has_params()) continue;
            if (st.spec.op == LayerOp::SoftmaxOutput) {
                keep_random(st);
            } else if (ebm && pose_branch) {
                keep_random(st);
            } else if (ebm) {
                // fc6-cat / fc7-cat map onto the source's fc6 / fc7
                std::string source = st.spec.name;
                const std::string tail = "-cat";
                if (source.size() > tail.size() &&
                    source.compare(source.size() - tail.size(), tail.size(), tail) == 0) {
                    source.resize(source.size() - tail.size());
                }
                copy_from(st, source);
            } else {
                copy_from(st, st.spec.name);
            }
        }
    }
}

std::vector<std::pair<std::string, Tensor>> Network::forward_with_activations(
    const Tensor& batch) {
    std::vector<std::pair<std::string, Tensor>> acts;
    acts.emplace_back("input", batch);
    Tensor cur = batch;
    for (auto& st : shared_) {
        cur = apply_layer(st, cur, Phase::Eval, nullptr);
        acts.emplace_back(st.spec.name, cur);
    }
    const Tensor shared_out = cur;
    for (auto& branch : branches_) {
        Tensor bt = shared_out;
        for (auto& st : branch) {
            bt = apply_layer(st, bt, Phase::Eval, nullptr);
            acts.emplace_back(st.spec.name, bt);
        }
    }
    return acts;
}

std::vector<std::string> Network::layer_names() const {
    std::vector<std::string> names{"input"};
    for (const auto& st : shared_) names.push_back(st.spec.name);
    for (const auto& branch : branches_) {
        for (const auto& st : branch) names.push_back(st.spec.name);
    }
    return names;
}

Network instantiate(const TopologySpec& spec, std::uint64_t seed,
                    const std::optional<std::string>& warm_start_path) {
    Network net(spec, seed);
    if (warm_start_path) {
        net.warm_start_from(load_checkpoint(*warm_start_path));
    }
    return net;
}

}  // namespace poselab
