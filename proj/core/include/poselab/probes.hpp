#pragma once

#include "poselab/model.hpp"
#include "poselab/pose_metrics.hpp"
#include "poselab/synth_data.hpp"
#include "poselab/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace poselab {

// Flattened per-sample activations with aligned labels.
struct FeatureMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> values;  // row-major
    std::vector<int> category;
    std::vector<double> angle_deg;
    std::vector<std::int64_t> instance_key;  // unique per (category, instance)

    double at(std::int64_t r, std::int64_t c) const {
        return values[static_cast<std::size_t>(r * cols + c)];
    }
    const double* row(std::int64_t r) const {
        return values.data() + static_cast<std::size_t>(r * cols);
    }
};

// Eval-mode center-crop forward over the given samples, activations of one
// layer flattened per sample. Layer "input" yields the raw cropped pixels.
FeatureMatrix extract_features(Network& net, const Dataset& data,
                               const std::vector<std::int64_t>& sample_ids,
                               const std::string& layer);

// ---------------------------------------------------------------------------
// Linear one-vs-all category probe: hinge loss + L2, trained by a seeded
// deterministic subgradient method (Pegasos-style, no bias term). Returns
// test accuracy.
// ---------------------------------------------------------------------------

struct LinearProbeConfig {
    double lambda = 1e-4;
    std::int64_t iterations = 20000;
    std::uint64_t seed = 17;
};

// One binary hinge run; exposed for the scale-equivariance oracle.
std::vector<double> pegasos_train(const FeatureMatrix& train, const std::vector<double>& labels,
                                  double lambda, std::int64_t iterations, std::uint64_t seed);

// Per-class decision scores on test rows (rows x classes, row-major).
std::vector<double> linear_probe_scores(const FeatureMatrix& train, const FeatureMatrix& test,
                                        int num_classes, const LinearProbeConfig& cfg);

double linear_category_probe(const FeatureMatrix& train, const FeatureMatrix& test,
                             const LinearProbeConfig& cfg = {});

// ---------------------------------------------------------------------------
// Kernel ridge pose probe: RBF kernel, circular targets (sin, cos), closed
// form (K + lambda_r I) alpha = y, prediction atan2(s, c).
// ---------------------------------------------------------------------------

enum class BandwidthRule { MedianHeuristic, Fixed };

struct KernelConfig {
    BandwidthRule rule = BandwidthRule::MedianHeuristic;
    double bandwidth = 1.0;  // used when rule == Fixed
    double lambda_r = 1e-3;
};

struct PoseProbeResult {
    double aaai = 0.0;
    double mae_deg = 0.0;
};

double median_heuristic_bandwidth(const FeatureMatrix& features);

PoseProbeResult kernel_ridge_pose_probe(const FeatureMatrix& train, const FeatureMatrix& test,
                                        const KernelConfig& config);

// ---------------------------------------------------------------------------
// kNN probes, exact Euclidean. Category: majority vote, ties to the class of
// the nearest member. Pose: circular mean of neighbor angles.
// ---------------------------------------------------------------------------

double knn_category(const FeatureMatrix& train, const FeatureMatrix& test, int k);
PoseProbeResult knn_pose(const FeatureMatrix& train, const FeatureMatrix& test, int k);

// ---------------------------------------------------------------------------
// Per-instance view-manifold measurements (averaged over instances).
// ---------------------------------------------------------------------------

// Smallest r with the leading singular values holding >= 90% of the total
// mass, on each instance's mean-centered view matrix; sigma_squared switches
// the mass from sigma to sigma^2.
double effective_sv_90(const FeatureMatrix& features, bool sigma_squared = false);

// Sum of singular values per instance. Default: mean-centered rows scaled to
// unit L2 norm; raw_mode skips both transforms.
double nuclear_norm(const FeatureMatrix& features, bool raw_mode = false);

// Leave-one-out kernel ridge regression of pose per instance, mean geodesic
// error in degrees. Instances with < 3 views are skipped (counted in
// skipped_instances).
double kernel_regression_error(const FeatureMatrix& features, const KernelConfig& config,
                               int* skipped_instances = nullptr);

// Seeded sign projection (+-1/sqrt(budget)) applied when cols > budget.
FeatureMatrix project_columns(const FeatureMatrix& features, std::int64_t budget,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Layer sweep.
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 5> kKnnKs = {1, 3, 5, 7, 9};

struct ProbeRow {
    std::string layer;
    double cat_acc = 0.0;
    double pose_aaai = 0.0;
    double pose_mae_deg = 0.0;
    std::array<double, 5> knn_cat{};
    std::array<double, 5> knn_pose_aaai{};
    double eff_sv90 = 0.0;
    double nuclear = 0.0;
    double kreg_err_deg = 0.0;
    bool cross_eval = false;  // features come from a task-specific branch/net
};

struct ProbeReport {
    std::vector<ProbeRow> rows;
};

struct ProbeOptions {
    std::int64_t train_cap = 512;  // strided subsample of the train split
    std::int64_t eval_cap = 256;
    LinearProbeConfig linear;
    std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    KernelConfig kernel;  // bandwidth rule for the pose probes
    std::int64_t column_budget = 16384;
    std::uint64_t seed = 7;
};

// One row per layer ("input" first), probes trained on the train split and
// scored on the test split; ridge lambda picked on the validation split.
// task_specific_net marks every row cross_eval (used for the PM subnets).
ProbeReport run_layer_sweep(Network& net, const Dataset& data, const ProbeOptions& options,
                            const std::string& layer_prefix = "",
                            bool task_specific_net = false);

// CSV with the fixed column set; the header names the kernel-regression
// column as a leave-one-out approximation.
void write_probe_csv(const ProbeReport& report, const std::string& path);

}  // namespace poselab
