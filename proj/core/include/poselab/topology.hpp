#pragma once

#include "poselab/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace poselab {

enum class LayerOp {
    Convolution,
    MaxPool,
    ReLU,
    LocalResponseNorm,
    FullyConnected,
    Dropout,
    SoftmaxOutput,  // FC producing logits; the softmax loss is applied outside
};

struct LayerSpec {
    std::string name;
    LayerOp op = LayerOp::ReLU;

    std::int64_t out_channels = 0;  // Convolution
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int pad = 0;
    int groups = 1;

    int pool_kernel = 0;  // MaxPool
    int pool_stride = 0;

    int lrn_size = 5;  // LocalResponseNorm
    double lrn_alpha = 1e-4;
    double lrn_beta = 0.75;

    std::int64_t out_dim = 0;  // FullyConnected / SoftmaxOutput

    double rate = 0.5;  // Dropout

    bool has_params() const {
        return op == LayerOp::Convolution || op == LayerOp::FullyConnected ||
               op == LayerOp::SoftmaxOutput;
    }

    static LayerSpec conv(std::string name, std::int64_t out_channels, int kernel, int stride,
                          int pad, int groups);
    static LayerSpec pool(std::string name, int kernel, int stride);
    static LayerSpec relu(std::string name);
    static LayerSpec lrn(std::string name, int size = 5, double alpha = 1e-4,
                         double beta = 0.75);
    static LayerSpec fc(std::string name, std::int64_t out_dim);
    static LayerSpec dropout(std::string name, double rate);
    static LayerSpec head(std::string name, std::int64_t num_labels);
};

struct LabelSpace {
    std::int64_t num_categories = 4;
    std::int64_t num_pose_bins = 16;
};

struct ScaleProfile {
    bool full = false;
    int image_size = 32;    // side of the square input fed to the network
    int width_divisor = 8;  // divides the full-scale conv widths at desk scale
    std::int64_t fc_width = 256;
    std::int64_t ebm_branch_width = 64;  // second FC width of the pose branch
    double dropout_rate = 0.5;
    bool use_lrn = false;

    static ScaleProfile full_scale();
    static ScaleProfile desk(int width_divisor = 8, int image_size = 32);
};

enum class ModelFamily { Base, PM, CPM, LBM, EBM };

struct ModelKind {
    ModelFamily family = ModelFamily::Base;
    std::int64_t ebm_width = 0;  // 0 picks the profile default
};

ModelFamily parse_family(const std::string& text);
std::string family_name(ModelFamily family);

struct BranchSpec {
    std::string name;  // "category", "pose", or "joint"
    std::vector<LayerSpec> layers;
};

struct TopologySpec {
    std::string kind_name;
    ScaleProfile profile;
    LabelSpace labels;
    int in_channels = 3;
    std::vector<LayerSpec> shared_prefix;
    std::vector<BranchSpec> branches;  // branch order fixed: category before pose

    std::size_t branch_point() const { return shared_prefix.size(); }
};

// PM yields two disjoint specs (category net then pose net); everything else yields one.
std::vector<TopologySpec> build_topology(ModelKind kind, LabelSpace labels,
                                         const ScaleProfile& profile);

// Output shape (C, H, W) or (features) after each layer, walking shared prefix then each
// branch. Used by parameter counting and the runtime; throws if a layer does not fit.
struct LayerShape {
    std::string name;
    std::vector<std::int64_t> dims;  // (C,H,W) for spatial layers, (features) after FC
    std::int64_t features() const;
};

std::vector<LayerShape> infer_shapes(const TopologySpec& spec);

std::int64_t count_parameters(const TopologySpec& spec, bool include_biases = false);
std::int64_t count_parameters(const std::vector<TopologySpec>& specs,
                              bool include_biases = false);

struct LayerCount {
    std::string layer;
    std::int64_t weights = 0;
    std::int64_t biases = 0;
};

std::vector<LayerCount> per_layer_counts(const TopologySpec& spec);

std::int64_t cpm_encode(std::int64_t c, std::int64_t p, const LabelSpace& labels);
void cpm_decode(std::int64_t joint, const LabelSpace& labels, std::int64_t& c, std::int64_t& p);

}  // namespace poselab
