#pragma once

#include <cstddef>
#include <vector>

#include "poselab/tensor.hpp"

namespace poselab {

// Discretization of the viewing circle into equal half-open bins
// [i*width, (i+1)*width), width = 360/P, with centers at the midpoints.
struct PoseBinning {
    int num_bins = 16;

    explicit PoseBinning(int p = 16) : num_bins(p) {
        check(p >= 1, "PoseBinning: num_bins must be >= 1, got " + std::to_string(p));
    }

    double bin_width() const { return 360.0 / num_bins; }
    double center(int i) const { return i * bin_width() + bin_width() / 2.0; }
};

// Probability vector over pose bins.
struct PoseDistribution {
    std::vector<double> probs;
};

// Per-task weights of the joint loss. Zero is accepted so a branch can be
// switched off entirely (its gradient path vanishes).
struct LossWeights {
    double category = 1.0;
    double pose = 1.0;
};

// Maps an angle in degrees (any real; normalized mod 360 first) to its bin.
int bin_of(double angle_deg, const PoseBinning& binning);

// Normalizes an angle into [0, 360).
double normalize_angle(double angle_deg);

// Center of the highest-probability bin; ties break toward the lowest index.
double argmax_pose(const PoseDistribution& dist, const PoseBinning& binning);

// Linear expectation of bin centers. Deliberately not a circular mean: mass
// split across the 0/360 seam lands mid-circle.
double expected_pose(const PoseDistribution& dist, const PoseBinning& binning);

// Optional circular-mean variant (unit-vector average of bin centers).
double expected_pose_circular(const PoseDistribution& dist, const PoseBinning& binning);

// Geodesic angular distance in [0, 180].
double abs_angular_error(double theta_est_deg, double theta_true_deg);

// 1 - geodesic(theta_i, theta_j)/180, in [0, 1].
double aaai_accuracy(double theta_i_deg, double theta_j_deg);

// Fraction of errors strictly below tau.
double threshold_accuracy(const std::vector<double>& errors_deg, double tau_deg);

// weights.category * loss_c + weights.pose * loss_p.
double joint_loss(double loss_c, double loss_p, const LossWeights& weights);

// Throws unless probs are nonnegative, finite and sum to 1 within 1e-9.
void check_distribution(const PoseDistribution& dist);

}  // namespace poselab
