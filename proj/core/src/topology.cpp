#include "poselab/topology.hpp"

#include <algorithm>
#include <stdexcept>

namespace poselab {

LayerSpec LayerSpec::conv(std::string name, std::int64_t out_channels, int kernel, int stride,
                          int pad, int groups) {
    check(out_channels >= 1 && kernel >= 1 && stride >= 1 && pad >= 0 && groups >= 1,
          "conv spec '" + name + "': invalid geometry");
    check(out_channels % groups == 0,
          "conv spec '" + name + "': out_channels not divisible by groups");
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::Convolution;
    s.out_channels = out_channels;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = stride;
    s.pad = pad;
    s.groups = groups;
    return s;
}

LayerSpec LayerSpec::pool(std::string name, int kernel, int stride) {
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::MaxPool;
    s.pool_kernel = kernel;
    s.pool_stride = stride;
    return s;
}

LayerSpec LayerSpec::relu(std::string name) {
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::ReLU;
    return s;
}

LayerSpec LayerSpec::lrn(std::string name, int size, double alpha, double beta) {
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::LocalResponseNorm;
    s.lrn_size = size;
    s.lrn_alpha = alpha;
    s.lrn_beta = beta;
    return s;
}

LayerSpec LayerSpec::fc(std::string name, std::int64_t out_dim) {
    check(out_dim >= 1, "fc spec '" + name + "': out_dim must be positive");
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::FullyConnected;
    s.out_dim = out_dim;
    return s;
}

LayerSpec LayerSpec::dropout(std::string name, double rate) {
    check(rate >= 0.0 && rate < 1.0, "dropout spec '" + name + "': rate must be in [0, 1)");
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::Dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::head(std::string name, std::int64_t num_labels) {
    check(num_labels >= 1, "head spec '" + name + "': needs at least one label");
    LayerSpec s;
    s.name = std::move(name);
    s.op = LayerOp::SoftmaxOutput;
    s.out_dim = num_labels;
    return s;
}

ScaleProfile ScaleProfile::full_scale() {
    ScaleProfile p;
    p.full = true;
    p.image_size = 227;
    p.width_divisor = 1;
    p.fc_width = 4096;
    p.ebm_branch_width = 4096;
    p.use_lrn = true;
    return p;
}

ScaleProfile ScaleProfile::desk(int width_divisor, int image_size) {
    check(width_divisor >= 1, "desk profile: width_divisor must be positive");
    check(image_size >= 16, "desk profile: image_size must be at least 16");
    ScaleProfile p;
    p.full = false;
    p.image_size = image_size;
    p.width_divisor = width_divisor;
    p.fc_width = 256;
    p.ebm_branch_width = 64;
    p.use_lrn = false;
    return p;
}

ModelFamily parse_family(const std::string& text) {
    if (text == "base") return ModelFamily::Base;
    if (text == "pm") return ModelFamily::PM;
    if (text == "cpm") return ModelFamily::CPM;
    if (text == "lbm") return ModelFamily::LBM;
    if (text == "ebm") return ModelFamily::EBM;
    throw std::invalid_argument("unknown model kind '" + text +
                                "' (expected base|pm|cpm|lbm|ebm)");
}

std::string family_name(ModelFamily family) {
    switch (family) {
        case ModelFamily::Base: return "base";
        case ModelFamily::PM: return "pm";
        case ModelFamily::CPM: return "cpm";
        case ModelFamily::LBM: return "lbm";
        case ModelFamily::EBM: return "ebm";
    }
    return "?";
}

namespace {

// AlexNet-shaped trunk: five convolutions at the classic widths (divided by the
// profile divisor at desk scale, along with kernel/stride geometry that fits small inputs).
std::vector<LayerSpec> conv_trunk(const ScaleProfile& p) {
    std::vector<LayerSpec> layers;
    if (p.full) {
        layers.push_back(LayerSpec::conv("conv1", 96, 11, 4, 0, 1));
        layers.push_back(LayerSpec::relu("relu1"));
        if (p.use_lrn) layers.push_back(LayerSpec::lrn("norm1"));
        layers.push_back(LayerSpec::pool("pool1", 3, 2));
        layers.push_back(LayerSpec::conv("conv2", 256, 5, 1, 2, 2));
        layers.push_back(LayerSpec::relu("relu2"));
        if (p.use_lrn) layers.push_back(LayerSpec::lrn("norm2"));
        layers.push_back(LayerSpec::pool("pool2", 3, 2));
        layers.push_back(LayerSpec::conv("conv3", 384, 3, 1, 1, 1));
        layers.push_back(LayerSpec::relu("relu3"));
        layers.push_back(LayerSpec::conv("conv4", 384, 3, 1, 1, 2));
        layers.push_back(LayerSpec::relu("relu4"));
        layers.push_back(LayerSpec::conv("conv5", 256, 3, 1, 1, 2));
        layers.push_back(LayerSpec::relu("relu5"));
        layers.push_back(LayerSpec::pool("pool5", 3, 2));
        return layers;
    }
    const int d = p.width_divisor;
    check(96 % d == 0 && 256 % d == 0 && 384 % d == 0,
          "desk profile: width_divisor " + std::to_string(d) +
              " does not divide the trunk widths 96/256/384");
    const auto w1 = static_cast<std::int64_t>(96 / d);
    const auto w2 = static_cast<std::int64_t>(256 / d);
    const auto w3 = static_cast<std::int64_t>(384 / d);
    check(w2 % 2 == 0 && w3 % 2 == 0,
          "desk profile: grouped conv widths must stay even after division");
    layers.push_back(LayerSpec::conv("conv1", w1, 5, 1, 2, 1));
    layers.push_back(LayerSpec::relu("relu1"));
    if (p.use_lrn) layers.push_back(LayerSpec::lrn("norm1"));
    layers.push_back(LayerSpec::pool("pool1", 3, 2));
    layers.push_back(LayerSpec::conv("conv2", w2, 5, 1, 2, 2));
    layers.push_back(LayerSpec::relu("relu2"));
    if (p.use_lrn) layers.push_back(LayerSpec::lrn("norm2"));
    layers.push_back(LayerSpec::pool("pool2", 3, 2));
    layers.push_back(LayerSpec::conv("conv3", w3, 3, 1, 1, 1));
    layers.push_back(LayerSpec::relu("relu3"));
    layers.push_back(LayerSpec::conv("conv4", w3, 3, 1, 1, 2));
    layers.push_back(LayerSpec::relu("relu4"));
    layers.push_back(LayerSpec::conv("conv5", w2, 3, 1, 1, 2));
    layers.push_back(LayerSpec::relu("relu5"));
    layers.push_back(LayerSpec::pool("pool5", 3, 2));
    return layers;
}

// fc6/relu/dropout + fc7/relu/dropout, with an optional name suffix for EBM branches
// and an independent fc7 width.
void append_fc_stack(std::vector<LayerSpec>& layers, const ScaleProfile& p,
                     const std::string& suffix, std::int64_t fc7_width) {
    layers.push_back(LayerSpec::fc("fc6" + suffix, p.fc_width));
    layers.push_back(LayerSpec::relu("relu6" + suffix));
    layers.push_back(LayerSpec::dropout("drop6" + suffix, p.dropout_rate));
    layers.push_back(LayerSpec::fc("fc7" + suffix, fc7_width));
    layers.push_back(LayerSpec::relu("relu7" + suffix));
    layers.push_back(LayerSpec::dropout("drop7" + suffix, p.dropout_rate));
}

TopologySpec single_head_net(std::string kind_name, const ScaleProfile& p, LabelSpace labels,
                             const std::string& branch, std::int64_t head_labels,
                             const std::string& head_name) {
    TopologySpec spec;
    spec.kind_name = std::move(kind_name);
    spec.profile = p;
    spec.labels = labels;
    spec.shared_prefix = conv_trunk(p);
    append_fc_stack(spec.shared_prefix, p, "", p.fc_width);
    spec.branches.push_back({branch, {LayerSpec::head(head_name, head_labels)}});
    return spec;
}

}  // namespace

std::vector<TopologySpec> build_topology(ModelKind kind, LabelSpace labels,
                                         const ScaleProfile& profile) {
    check(labels.num_categories >= 1 && labels.num_pose_bins >= 1,
          "build_topology: label space must be nonempty");
    const std::int64_t C = labels.num_categories;
    const std::int64_t P = labels.num_pose_bins;

    switch (kind.family) {
        case ModelFamily::Base:
            return {single_head_net("base", profile, labels, "category", C, "fc8-cat")};
        case ModelFamily::PM:
            return {
                single_head_net("pm-category", profile, labels, "category", C, "fc8-cat"),
                single_head_net("pm-pose", profile, labels, "pose", P, "fc8-pose"),
            };
        case ModelFamily::CPM:
            return {single_head_net("cpm", profile, labels, "joint", C * P, "fc8-joint")};
        case ModelFamily::LBM: {
            TopologySpec spec;
            spec.kind_name = "lbm";
            spec.profile = profile;
            spec.labels = labels;
            spec.shared_prefix = conv_trunk(profile);
            append_fc_stack(spec.shared_prefix, profile, "", profile.fc_width);
            spec.branches.push_back({"category", {LayerSpec::head("fc8-cat", C)}});
            spec.branches.push_back({"pose", {LayerSpec::head("fc8-pose", P)}});
            return {spec};
        }
        case ModelFamily::EBM: {
            std::int64_t w = kind.ebm_width > 0 ? kind.ebm_width : profile.ebm_branch_width;
            check(w >= 1, "build_topology: EBM branch width must be positive");
            check(!profile.full || w <= 4096,
                  "build_topology: EBM branch width " + std::to_string(w) +
                      " exceeds the full-scale fc6 width");
            TopologySpec spec;
            spec.kind_name = "ebm";
            spec.profile = profile;
            spec.labels = labels;
            spec.shared_prefix = conv_trunk(profile);
            BranchSpec cat{"category", {}};
            append_fc_stack(cat.layers, profile, "-cat", profile.fc_width);
            cat.layers.push_back(LayerSpec::head("fc8-cat", C));
            BranchSpec pose{"pose", {}};
            append_fc_stack(pose.layers, profile, "-pose", w);
            pose.layers.push_back(LayerSpec::head("fc8-pose", P));
            spec.branches.push_back(std::move(cat));
            spec.branches.push_back(std::move(pose));
            return {spec};
        }
    }
    throw std::logic_error("build_topology: unhandled model family");
}

std::int64_t LayerShape::features() const {
    std::int64_t f = 1;
    for (std::int64_t d : dims) f *= d;
    return f;
}

namespace {

std::vector<std::int64_t> step_shape(const LayerSpec& layer,
                                     const std::vector<std::int64_t>& in) {
    switch (layer.op) {
        case LayerOp::Convolution: {
            check(in.size() == 3, "layer '" + layer.name + "': convolution needs a spatial input");
            check(in[0] % layer.groups == 0,
                  "layer '" + layer.name + "': input channels " + std::to_string(in[0]) +
                      " not divisible by groups " + std::to_string(layer.groups));
            const std::int64_t oh = (in[1] + 2 * layer.pad - layer.kernel_h) / layer.stride + 1;
            const std::int64_t ow = (in[2] + 2 * layer.pad - layer.kernel_w) / layer.stride + 1;
            check(oh >= 1 && ow >= 1, "layer '" + layer.name + "': kernel does not fit input " +
                                          std::to_string(in[1]) + "x" + std::to_string(in[2]));
            return {layer.out_channels, oh, ow};
        }
        case LayerOp::MaxPool: {
            check(in.size() == 3, "layer '" + layer.name + "': pooling needs a spatial input");
            const std::int64_t oh = (in[1] - layer.pool_kernel) / layer.pool_stride + 1;
            const std::int64_t ow = (in[2] - layer.pool_kernel) / layer.pool_stride + 1;
            check(in[1] >= layer.pool_kernel && in[2] >= layer.pool_kernel,
                  "layer '" + layer.name + "': pool kernel does not fit");
            return {in[0], oh, ow};
        }
        case LayerOp::ReLU:
        case LayerOp::LocalResponseNorm:
        case LayerOp::Dropout:
            return in;
        case LayerOp::FullyConnected:
        case LayerOp::SoftmaxOutput:
            return {layer.out_dim};
    }
    throw std::logic_error("step_shape: unhandled layer op");
}

}  // namespace

std::vector<LayerShape> infer_shapes(const TopologySpec& spec) {
    std::vector<LayerShape> out;
    std::vector<std::int64_t> cur = {spec.in_channels, spec.profile.image_size,
                                     spec.profile.image_size};
    for (const auto& layer : spec.shared_prefix) {
        cur = step_shape(layer, cur);
        out.push_back({layer.name, cur});
    }
    const std::vector<std::int64_t> at_branch = cur;
    for (const auto& branch : spec.branches) {
        cur = at_branch;
        for (const auto& layer : branch.layers) {
            cur = step_shape(layer, cur);
            out.push_back({layer.name, cur});
        }
    }
    return out;
}

std::vector<LayerCount> per_layer_counts(const TopologySpec& spec) {
    std::vector<LayerCount> counts;
    std::vector<std::int64_t> cur = {spec.in_channels, spec.profile.image_size,
                                     spec.profile.image_size};
    auto visit = [&](const LayerSpec& layer) {
        std::int64_t in_features = 1;
        for (std::int64_t d : cur) in_features *= d;
        const std::int64_t in_channels = cur.size() == 3 ? cur[0] : 0;
        cur = step_shape(layer, cur);
        if (!layer.has_params()) return;
        LayerCount lc;
        lc.layer = layer.name;
        if (layer.op == LayerOp::Convolution) {
            lc.weights = layer.out_channels * (in_channels / layer.groups) * layer.kernel_h *
                         layer.kernel_w;
            lc.biases = layer.out_channels;
        } else {
            lc.weights = layer.out_dim * in_features;
            lc.biases = layer.out_dim;
        }
        counts.push_back(std::move(lc));
    };
    for (const auto& layer : spec.shared_prefix) visit(layer);
    const std::vector<std::int64_t> at_branch = cur;
    for (const auto& branch : spec.branches) {
        cur = at_branch;
        for (const auto& layer : branch.layers) visit(layer);
    }
    return counts;
}

std::int64_t count_parameters(const TopologySpec& spec, bool include_biases) {
    std::int64_t total = 0;
    for (const auto& lc : per_layer_counts(spec)) {
        total += lc.weights;
        if (include_biases) total += lc.biases;
    }
    return total;
}

std::int64_t count_parameters(const std::vector<TopologySpec>& specs, bool include_biases) {
    std::int64_t total = 0;
    for (const auto& spec : specs) total += count_parameters(spec, include_biases);
    return total;
}

std::int64_t cpm_encode(std::int64_t c, std::int64_t p, const LabelSpace& labels) {
    check(c >= 0 && c < labels.num_categories,
          "cpm_encode: category index " + std::to_string(c) + " out of range [0, " +
              std::to_string(labels.num_categories) + ")");
    check(p >= 0 && p < labels.num_pose_bins,
          "cpm_encode: pose bin " + std::to_string(p) + " out of range [0, " +
              std::to_string(labels.num_pose_bins) + ")");
    return c * labels.num_pose_bins + p;
}

void cpm_decode(std::int64_t joint, const LabelSpace& labels, std::int64_t& c, std::int64_t& p) {
    check(joint >= 0 && joint < labels.num_categories * labels.num_pose_bins,
          "cpm_decode: joint index " + std::to_string(joint) + " out of range");
    c = joint / labels.num_pose_bins;
    p = joint % labels.num_pose_bins;
}

}  // namespace poselab
