#pragma once

#include "poselab/model.hpp"
#include "poselab/optimizer.hpp"
#include "poselab/pose_metrics.hpp"
#include "poselab/synth_data.hpp"
#include "poselab/topology.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace poselab {

enum class PoseRule { Argmax, Expected, Both };

PoseRule parse_pose_rule(const std::string& text);
std::string pose_rule_name(PoseRule rule);

// Every field maps one-to-one onto a config-file key of the same name
// (model, ebm_width, categories, pose_bins, dataset, lambda1, lambda2,
// base_lr, gamma, decay_interval, momentum, weight_decay, batch_size,
// max_iterations, seed, warm_start, pose_rule, profile, image_size,
// eval_interval). Unknown keys are rejected.
struct ExperimentConfig {
    ModelKind kind;
    LabelSpace labels;
    std::string dataset;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double base_lr = 5e-4;
    double gamma = 0.1;
    std::int64_t decay_interval = 1000;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::int64_t batch_size = 32;
    std::int64_t max_iterations = 2500;
    std::uint64_t seed = 0;
    std::string warm_start;  // empty = from scratch
    PoseRule pose_rule = PoseRule::Both;
    ScaleProfile profile = ScaleProfile::desk();
    std::int64_t eval_interval = 250;

    SolverConfig solver() const;
    void validate() const;
};

ExperimentConfig parse_experiment_config_text(const std::string& text);
ExperimentConfig parse_experiment_config(const std::string& path);

// Per-iteration training record; learning rate is nonincreasing and drops
// exactly at positive multiples of the decay interval.
struct ConvergenceLog {
    struct Record {
        std::int64_t iter = 0;
        double lr = 0.0;
        double cat_err = 0.0;
        double pose_err = 0.0;
        double loss = 0.0;
    };
    std::vector<Record> records;

    void append(Record rec);
};

void write_convergence_csv(const ConvergenceLog& log, const std::string& path);

// All columns are percentages in [0, 100]. Threshold accuracies follow the
// configured point-prediction rule (argmax unless the rule is `expected`);
// both AAAI variants are always reported.
struct ResultsRow {
    double category_pct = 0.0;
    double pose_22_5_pct = 0.0;
    double pose_45_pct = 0.0;
    double aaai_argmax_pct = 0.0;
    double aaai_expected_pct = 0.0;
};

struct LabeledResultsRow {
    std::string model;
    std::string split;
    ResultsRow row;
};

void write_results_csv(const std::vector<LabeledResultsRow>& rows, const std::string& path);

// One logical model: a single network, except PM which holds the category
// net and the pose net (in that order) trained on the same batches.
class JointModel {
  public:
    static JointModel create(const ExperimentConfig& config);

    ModelKind kind() const { return kind_; }
    const LabelSpace& labels() const { return labels_; }
    std::vector<Network>& nets() { return nets_; }

    // Per-sample distributions under eval phase. Base has no pose head and
    // yields the uniform pose distribution.
    void predict(const Tensor& images, std::vector<std::vector<double>>& cat_dist,
                 std::vector<PoseDistribution>& pose_dist);

    struct StepStats {
        double loss = 0.0;      // lambda1 * cat CE + lambda2 * pose CE
        double cat_err = 0.0;   // batch fraction
        double pose_err = 0.0;  // batch fraction
    };

    // Forward + loss + backward (gradients accumulate); no parameter update.
    StepStats train_step(const Dataset::Batch& batch, double lambda1, double lambda2);

    void sgd_update(double lr, double momentum, double weight_decay);
    void zero_grads();

    // PM records carry "category/" and "pose/" prefixes.
    std::vector<CheckpointRecord> to_records() const;
    void load_records(const std::vector<CheckpointRecord>& records);
    void save(const std::string& path) const;
    void load(const std::string& path);

  private:
    ModelKind kind_;
    LabelSpace labels_;
    std::vector<Network> nets_;
};

ResultsRow evaluate_ids(JointModel& model, const Dataset& data,
                        const std::vector<std::int64_t>& ids, PoseRule rule);
ResultsRow evaluate_model(JointModel& model, const Dataset& data, Split split, PoseRule rule);

struct ValPoint {
    std::int64_t iter = 0;
    double cat_err = 0.0;    // fraction on the validation split
    double pose_aaai = 0.0;  // fraction, argmax rule
};

struct TrainResult {
    ConvergenceLog log;
    std::vector<ValPoint> val_history;
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::int64_t best_iter = 0;
    double best_val_metric = 0.0;  // mean of category accuracy and pose AAAI, percent
};

// Writes {run_name}-convergence.csv, {run_name}-final.ckpt and
// {run_name}-best.ckpt (best validation mean of category accuracy and pose
// AAAI) under out_dir. Aborts on non-finite loss, naming the iteration and
// the batch sample ids.
TrainResult train(const ExperimentConfig& config, const Dataset& data,
                  const std::string& out_dir, const std::string& run_name);

// Wiring check: repeats the first training batch; returns the final joint loss.
double overfit_one_batch(const ExperimentConfig& config, const Dataset& data,
                         std::int64_t iterations);

struct LambdaSweepRow {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    ResultsRow test;
};

// Trains one model per grid point with a shared seed and scores the best
// checkpoint on the test split; writes {run_name}-lambda-sweep.csv.
std::vector<LambdaSweepRow> lambda_sweep(const ExperimentConfig& base,
                                         const std::vector<std::pair<double, double>>& grid,
                                         const Dataset& data, const std::string& out_dir,
                                         const std::string& run_name);

struct ConvergenceCompare {
    std::vector<std::string> names;
    std::vector<std::int64_t> iters;
    std::vector<std::vector<ValPoint>> history;     // per model, aligned with iters
    std::vector<std::int64_t> iters_to_threshold;   // -1 = not reached
};

// Trains every config (shared dataset; eval cadence must match) and aligns
// the validation curves; the threshold applies to validation pose AAAI.
ConvergenceCompare convergence_compare(
    const std::vector<std::pair<std::string, ExperimentConfig>>& runs, const Dataset& data,
    double aaai_threshold, const std::string& out_dir, const std::string& run_name);

void write_convergence_compare_csv(const ConvergenceCompare& cmp, double aaai_threshold,
                                   const std::string& path);

}  // namespace poselab
