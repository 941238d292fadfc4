#include "poselab/pose_metrics.hpp"

#include <cmath>

namespace poselab {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double normalize_angle(double angle_deg) {
    double a = std::fmod(angle_deg, 360.0);
    if (a < 0.0) a += 360.0;
    if (a >= 360.0) a = 0.0;  // fmod can round up to exactly 360
    return a;
}

int bin_of(double angle_deg, const PoseBinning& binning) {
    const double a = normalize_angle(angle_deg);
    int i = static_cast<int>(a / binning.bin_width());
    if (i >= binning.num_bins) i = binning.num_bins - 1;
    return i;
}

void check_distribution(const PoseDistribution& dist) {
    check(!dist.probs.empty(), "PoseDistribution: empty probability vector");
    double sum = 0.0;
    for (double p : dist.probs) {
        check(std::isfinite(p) && p >= 0.0, "PoseDistribution: probabilities must be >= 0 and finite");
        sum += p;
    }
    check(std::fabs(sum - 1.0) <= 1e-9,
          "PoseDistribution: probabilities sum to " + std::to_string(sum) + ", expected 1");
}

double argmax_pose(const PoseDistribution& dist, const PoseBinning& binning) {
    check_distribution(dist);
    check(static_cast<int>(dist.probs.size()) == binning.num_bins,
          "argmax_pose: distribution has " + std::to_string(dist.probs.size()) +
              " entries for " + std::to_string(binning.num_bins) + " bins");
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i) {
        if (dist.probs[i] > dist.probs[best]) best = i;
    }
    return binning.center(static_cast<int>(best));
}

double expected_pose(const PoseDistribution& dist, const PoseBinning& binning) {
    check_distribution(dist);
    check(static_cast<int>(dist.probs.size()) == binning.num_bins,
          "expected_pose: distribution has " + std::to_string(dist.probs.size()) +
              " entries for " + std::to_string(binning.num_bins) + " bins");
    double e = 0.0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        e += dist.probs[i] * binning.center(static_cast<int>(i));
    }
    return e;
}

double expected_pose_circular(const PoseDistribution& dist, const PoseBinning& binning) {
    check_distribution(dist);
    check(static_cast<int>(dist.probs.size()) == binning.num_bins,
          "expected_pose_circular: distribution size mismatch");
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        const double a = binning.center(static_cast<int>(i)) * kPi / 180.0;
        s += dist.probs[i] * std::sin(a);
        c += dist.probs[i] * std::cos(a);
    }
    return normalize_angle(std::atan2(s, c) * 180.0 / kPi);
}

double abs_angular_error(double theta_est_deg, double theta_true_deg) {
    const double d = std::fabs(normalize_angle(theta_est_deg) - normalize_angle(theta_true_deg));
    return d <= 180.0 ? d : 360.0 - d;
}

double aaai_accuracy(double theta_i_deg, double theta_j_deg) {
    return 1.0 - abs_angular_error(theta_i_deg, theta_j_deg) / 180.0;
}

double threshold_accuracy(const std::vector<double>& errors_deg, double tau_deg) {
    check(!errors_deg.empty(), "threshold_accuracy: empty error list");
    check(tau_deg > 0.0, "threshold_accuracy: tau must be positive");
    std::size_t hits = 0;
    for (double e : errors_deg) {
        if (e < tau_deg) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(errors_deg.size());
}

double joint_loss(double loss_c, double loss_p, const LossWeights& weights) {
    check(std::isfinite(loss_c) && std::isfinite(loss_p), "joint_loss: losses must be finite");
    check(std::isfinite(weights.category) && weights.category >= 0.0 &&
          std::isfinite(weights.pose) && weights.pose >= 0.0,
          "joint_loss: weights must be nonnegative and finite");
    return weights.category * loss_c + weights.pose * loss_p;
}

}  // namespace poselab
