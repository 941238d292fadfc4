#include "poselab/probes.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

namespace poselab {

namespace {

constexpr double kPi = std::numbers::pi;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_matrix(const FeatureMatrix& f) {
    return Eigen::Map<const RowMat>(f.values.data(), f.rows, f.cols);
}

void check_features(const FeatureMatrix& f, const char* what) {
    check(f.rows >= 1 && f.cols >= 1, std::string(what) + ": empty feature matrix");
    check(static_cast<std::int64_t>(f.values.size()) == f.rows * f.cols,
          std::string(what) + ": value buffer does not match rows*cols");
    check(static_cast<std::int64_t>(f.category.size()) == f.rows &&
              static_cast<std::int64_t>(f.angle_deg.size()) == f.rows &&
              static_cast<std::int64_t>(f.instance_key.size()) == f.rows,
          std::string(what) + ": label vectors do not match row count");
}

// Plain left-to-right accumulation; the kNN exactness contract depends on
// this exact summation order.
double sqdist(const double* a, const double* b, std::int64_t d) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

FeatureMatrix extract_features(Network& net, const Dataset& data,
                               const std::vector<std::int64_t>& sample_ids,
                               const std::string& layer) {
    const auto names = net.layer_names();
    check(std::find(names.begin(), names.end(), layer) != names.end(),
          "extract_features: network has no layer named '" + layer + "'");
    check(!sample_ids.empty(), "extract_features: no samples requested");

    FeatureMatrix out;
    Dataset::BatchOptions opts;
    opts.crop_size = net.spec().profile.image_size;
    opts.train_mode = false;

    const std::int64_t chunk = 64;
    for (std::size_t start = 0; start < sample_ids.size();
         start += static_cast<std::size_t>(chunk)) {
        const std::size_t stop = std::min(sample_ids.size(), start + static_cast<std::size_t>(chunk));
        const std::vector<std::int64_t> ids(sample_ids.begin() + static_cast<std::ptrdiff_t>(start),
                                            sample_ids.begin() + static_cast<std::ptrdiff_t>(stop));
        const Dataset::Batch batch = data.load_batch(ids, opts);
        const auto acts = net.forward_with_activations(batch.images);
        const Tensor* chosen = nullptr;
        for (const auto& [name, tensor] : acts) {
            if (name == layer) {
                chosen = &tensor;
                break;
            }
        }
        check(chosen != nullptr, "extract_features: layer '" + layer + "' missing from forward");
        const std::int64_t n = chosen->dim(0);
        const std::int64_t d = chosen->numel() / n;
        if (out.cols == 0) out.cols = d;
        check(out.cols == d, "extract_features: inconsistent feature width across batches");
        for (std::int64_t r = 0; r < n; ++r) {
            out.values.insert(out.values.end(),
                              chosen->data.begin() + static_cast<std::ptrdiff_t>(r * d),
                              chosen->data.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
            const std::size_t bi = static_cast<std::size_t>(r);
            out.category.push_back(batch.category[bi]);
            out.angle_deg.push_back(batch.angle_deg[bi]);
            const auto& rec = data.manifest().records[static_cast<std::size_t>(batch.sample_ids[bi])];
            out.instance_key.push_back(rec.category * 1000000 + rec.instance);
            ++out.rows;
        }
    }
    for (double v : out.values) {
        check(std::isfinite(v), "extract_features: non-finite activation in layer '" + layer + "'");
    }
    return out;
}

std::vector<double> pegasos_train(const FeatureMatrix& train, const std::vector<double>& labels,
                                  double lambda, std::int64_t iterations, std::uint64_t seed) {
    check_features(train, "pegasos_train");
    check(static_cast<std::int64_t>(labels.size()) == train.rows,
          "pegasos_train: label count does not match rows");
    check(lambda > 0.0, "pegasos_train: lambda must be positive");
    check(iterations >= 1, "pegasos_train: need at least one iteration");

    const std::int64_t d = train.cols;
    std::vector<double> w(static_cast<std::size_t>(d), 0.0);
    Rng rng(mix_seed(seed, 0x5e6a505ull));
    const double radius = 1.0 / std::sqrt(lambda);
    for (std::int64_t t = 1; t <= iterations; ++t) {
        const std::int64_t i =
            static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(train.rows)));
        const double* x = train.row(i);
        const double y = labels[static_cast<std::size_t>(i)];
        double margin = 0.0;
        for (std::int64_t j = 0; j < d; ++j) margin += w[static_cast<std::size_t>(j)] * x[j];
        margin *= y;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double shrink = 1.0 - eta * lambda;
        for (auto& wj : w) wj *= shrink;
        if (margin < 1.0) {
            const double step = eta * y;
            for (std::int64_t j = 0; j < d; ++j) w[static_cast<std::size_t>(j)] += step * x[j];
        }
        double norm_sq = 0.0;
        for (double wj : w) norm_sq += wj * wj;
        const double norm = std::sqrt(norm_sq);
        if (norm > radius) {
            const double f = radius / norm;
            for (auto& wj : w) wj *= f;
        }
    }
    return w;
}

std::vector<double> linear_probe_scores(const FeatureMatrix& train, const FeatureMatrix& test,
                                        int num_classes, const LinearProbeConfig& cfg) {
    check_features(train, "linear_probe_scores");
    check_features(test, "linear_probe_scores");
    check(train.cols == test.cols, "linear_probe_scores: train has " +
                                       std::to_string(train.cols) + " columns, test has " +
                                       std::to_string(test.cols));
    check(num_classes >= 2, "linear_probe_scores: need at least 2 classes");

    std::vector<double> scores(static_cast<std::size_t>(test.rows * num_classes), 0.0);
    std::vector<double> labels(static_cast<std::size_t>(train.rows));
    for (int c = 0; c < num_classes; ++c) {
        for (std::int64_t r = 0; r < train.rows; ++r) {
            labels[static_cast<std::size_t>(r)] = train.category[static_cast<std::size_t>(r)] == c
                                                      ? 1.0
                                                      : -1.0;
        }
        const auto w = pegasos_train(train, labels, cfg.lambda, cfg.iterations,
                                     mix_seed(cfg.seed, static_cast<std::uint64_t>(c)));
        for (std::int64_t r = 0; r < test.rows; ++r) {
            const double* x = test.row(r);
            double s = 0.0;
            for (std::int64_t j = 0; j < test.cols; ++j) {
                s += w[static_cast<std::size_t>(j)] * x[j];
            }
            scores[static_cast<std::size_t>(r * num_classes + c)] = s;
        }
    }
    return scores;
}

double linear_category_probe(const FeatureMatrix& train, const FeatureMatrix& test,
                             const LinearProbeConfig& cfg) {
    int num_classes = 0;
    for (int c : train.category) num_classes = std::max(num_classes, c + 1);
    for (int c : test.category) num_classes = std::max(num_classes, c + 1);
    check(num_classes >= 2, "linear_category_probe: need at least 2 categories in the data");
    const auto scores = linear_probe_scores(train, test, num_classes, cfg);
    std::int64_t correct = 0;
    for (std::int64_t r = 0; r < test.rows; ++r) {
        int best = 0;
        for (int c = 1; c < num_classes; ++c) {
            if (scores[static_cast<std::size_t>(r * num_classes + c)] >
                scores[static_cast<std::size_t>(r * num_classes + best)]) {
                best = c;
            }
        }
        if (best == test.category[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.rows);
}

namespace {

// Pairwise squared distances via GEMM; used by the kernel probes where only
// tolerance-level agreement matters.
RowMat cross_sqdist(const FeatureMatrix& a, const FeatureMatrix& b) {
    auto A = as_matrix(a);
    auto B = as_matrix(b);
    const Eigen::VectorXd an = A.rowwise().squaredNorm();
    const Eigen::VectorXd bn = B.rowwise().squaredNorm();
    RowMat d2 = (-2.0 * A * B.transpose());
    for (std::int64_t i = 0; i < a.rows; ++i) {
        for (std::int64_t j = 0; j < b.rows; ++j) {
            double v = d2(i, j) + an(i) + bn(j);
            d2(i, j) = v > 0.0 ? v : 0.0;
        }
    }
    return d2;
}

std::vector<std::int64_t> strided_rows(std::int64_t n, std::int64_t cap) {
    std::vector<std::int64_t> out;
    if (n <= cap) {
        for (std::int64_t i = 0; i < n; ++i) out.push_back(i);
    } else {
        for (std::int64_t i = 0; i < cap; ++i) out.push_back(i * n / cap);
    }
    return out;
}

}  // namespace

double median_heuristic_bandwidth(const FeatureMatrix& features) {
    check_features(features, "median_heuristic_bandwidth");
    const auto rows = strided_rows(features.rows, 256);
    std::vector<double> dists;
    dists.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            dists.push_back(std::sqrt(
                sqdist(features.row(rows[i]), features.row(rows[j]), features.cols)));
        }
    }
    if (dists.empty()) return 1.0;
    std::sort(dists.begin(), dists.end());
    const std::size_t n = dists.size();
    const double med = n % 2 == 1 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    return med > 0.0 ? med : 1.0;
}

namespace {

struct KrrSolve {
    Eigen::MatrixXd alpha;  // n x 2
    double bandwidth = 1.0;
};

Eigen::MatrixXd rbf_from_sqdist(const RowMat& d2, double bandwidth) {
    Eigen::MatrixXd k(d2.rows(), d2.cols());
    const double denom = 2.0 * bandwidth * bandwidth;
    for (Eigen::Index i = 0; i < d2.rows(); ++i) {
        for (Eigen::Index j = 0; j < d2.cols(); ++j) k(i, j) = std::exp(-d2(i, j) / denom);
    }
    return k;
}

Eigen::MatrixXd circular_targets(const std::vector<double>& angles) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(angles.size()), 2);
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double rad = angles[i] * kPi / 180.0;
        y(static_cast<Eigen::Index>(i), 0) = std::sin(rad);
        y(static_cast<Eigen::Index>(i), 1) = std::cos(rad);
    }
    return y;
}

KrrSolve krr_solve(const Eigen::MatrixXd& ktrain, const Eigen::MatrixXd& y, double lambda_r) {
    check(lambda_r >= 0.0, "kernel ridge: lambda_r must be nonnegative");
    Eigen::MatrixXd reg = ktrain;
    for (Eigen::Index i = 0; i < reg.rows(); ++i) reg(i, i) += lambda_r;
    KrrSolve out;
    out.alpha = reg.ldlt().solve(y);
    const double residual = (reg * out.alpha - y).cwiseAbs().maxCoeff();
    if (!out.alpha.allFinite() || (lambda_r == 0.0 && residual > 1e-6)) {
        throw std::runtime_error(
            "kernel ridge: system is singular; set lambda_r > 0 to regularize");
    }
    return out;
}

double predicted_angle(double s, double c) {
    return normalize_angle(std::atan2(s, c) * 180.0 / kPi);
}

PoseProbeResult score_pose_predictions(const Eigen::MatrixXd& pred,
                                       const std::vector<double>& truth) {
    PoseProbeResult res;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        const double est = predicted_angle(pred(i, 0), pred(i, 1));
        const double err = abs_angular_error(est, truth[static_cast<std::size_t>(i)]);
        res.mae_deg += err;
        res.aaai += aaai_accuracy(est, truth[static_cast<std::size_t>(i)]);
    }
    res.mae_deg /= static_cast<double>(pred.rows());
    res.aaai /= static_cast<double>(pred.rows());
    return res;
}

}  // namespace

PoseProbeResult kernel_ridge_pose_probe(const FeatureMatrix& train, const FeatureMatrix& test,
                                        const KernelConfig& config) {
    check_features(train, "kernel_ridge_pose_probe");
    check_features(test, "kernel_ridge_pose_probe");
    check(train.cols == test.cols, "kernel_ridge_pose_probe: feature widths differ");

    const double bw = config.rule == BandwidthRule::Fixed ? config.bandwidth
                                                          : median_heuristic_bandwidth(train);
    check(bw > 0.0, "kernel_ridge_pose_probe: bandwidth must be positive");

    const Eigen::MatrixXd ktr = rbf_from_sqdist(cross_sqdist(train, train), bw);
    const Eigen::MatrixXd y = circular_targets(train.angle_deg);
    const KrrSolve solve = krr_solve(ktr, y, config.lambda_r);
    const Eigen::MatrixXd kte = rbf_from_sqdist(cross_sqdist(test, train), bw);
    return score_pose_predictions(kte * solve.alpha, test.angle_deg);
}

namespace {

// Sorted (distance, index) neighbors per test row; exact naive distances so
// ties resolve by training index.
std::vector<std::vector<std::pair<double, std::int64_t>>> knn_table(const FeatureMatrix& train,
                                                                    const FeatureMatrix& test,
                                                                    int kmax) {
    check(kmax >= 1, "knn: k must be positive");
    check(kmax <= train.rows, "knn: k = " + std::to_string(kmax) + " exceeds " +
                                  std::to_string(train.rows) + " training rows");
    std::vector<std::vector<std::pair<double, std::int64_t>>> table(
        static_cast<std::size_t>(test.rows));
    std::vector<std::pair<double, std::int64_t>> all(static_cast<std::size_t>(train.rows));
    for (std::int64_t t = 0; t < test.rows; ++t) {
        for (std::int64_t i = 0; i < train.rows; ++i) {
            all[static_cast<std::size_t>(i)] = {sqdist(test.row(t), train.row(i), train.cols), i};
        }
        std::partial_sort(all.begin(), all.begin() + kmax, all.end());
        table[static_cast<std::size_t>(t)].assign(all.begin(), all.begin() + kmax);
    }
    return table;
}

double knn_category_from_table(
    const std::vector<std::vector<std::pair<double, std::int64_t>>>& table,
    const FeatureMatrix& train, const FeatureMatrix& test, int k) {
    std::int64_t correct = 0;
    for (std::int64_t t = 0; t < test.rows; ++t) {
        const auto& nb = table[static_cast<std::size_t>(t)];
        std::map<int, int> votes;
        for (int i = 0; i < k; ++i) ++votes[train.category[static_cast<std::size_t>(nb[i].second)]];
        int best_count = 0;
        for (const auto& [cls, count] : votes) best_count = std::max(best_count, count);
        // tie: the tied class seen earliest in distance order wins
        int winner = -1;
        for (int i = 0; i < k && winner < 0; ++i) {
            const int cls = train.category[static_cast<std::size_t>(nb[i].second)];
            if (votes[cls] == best_count) winner = cls;
        }
        if (winner == test.category[static_cast<std::size_t>(t)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.rows);
}

PoseProbeResult knn_pose_from_table(
    const std::vector<std::vector<std::pair<double, std::int64_t>>>& table,
    const FeatureMatrix& train, const FeatureMatrix& test, int k) {
    PoseProbeResult res;
    for (std::int64_t t = 0; t < test.rows; ++t) {
        const auto& nb = table[static_cast<std::size_t>(t)];
        double s = 0.0, c = 0.0;
        for (int i = 0; i < k; ++i) {
            const double rad =
                train.angle_deg[static_cast<std::size_t>(nb[i].second)] * kPi / 180.0;
            s += std::sin(rad);
            c += std::cos(rad);
        }
        const double est = predicted_angle(s, c);
        const double truth = test.angle_deg[static_cast<std::size_t>(t)];
        res.mae_deg += abs_angular_error(est, truth);
        res.aaai += aaai_accuracy(est, truth);
    }
    res.mae_deg /= static_cast<double>(test.rows);
    res.aaai /= static_cast<double>(test.rows);
    return res;
}

}  // namespace

double knn_category(const FeatureMatrix& train, const FeatureMatrix& test, int k) {
    check_features(train, "knn_category");
    check_features(test, "knn_category");
    check(train.cols == test.cols, "knn_category: feature widths differ");
    return knn_category_from_table(knn_table(train, test, k), train, test, k);
}

PoseProbeResult knn_pose(const FeatureMatrix& train, const FeatureMatrix& test, int k) {
    check_features(train, "knn_pose");
    check_features(test, "knn_pose");
    check(train.cols == test.cols, "knn_pose: feature widths differ");
    return knn_pose_from_table(knn_table(train, test, k), train, test, k);
}

namespace {

std::map<std::int64_t, std::vector<std::int64_t>> group_by_instance(const FeatureMatrix& f) {
    std::map<std::int64_t, std::vector<std::int64_t>> groups;
    for (std::int64_t r = 0; r < f.rows; ++r) {
        groups[f.instance_key[static_cast<std::size_t>(r)]].push_back(r);
    }
    return groups;
}

RowMat centered_group(const FeatureMatrix& f, const std::vector<std::int64_t>& rows) {
    RowMat m(static_cast<Eigen::Index>(rows.size()), f.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::int64_t j = 0; j < f.cols; ++j) m(static_cast<Eigen::Index>(i), j) = f.at(rows[i], j);
    }
    const Eigen::RowVectorXd mean = m.colwise().mean();
    m.rowwise() -= mean;
    return m;
}

Eigen::VectorXd singular_values(const RowMat& m) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues();
}

}  // namespace

double effective_sv_90(const FeatureMatrix& features, bool sigma_squared) {
    check_features(features, "effective_sv_90");
    const auto groups = group_by_instance(features);
    check(!groups.empty(), "effective_sv_90: no instance groups");
    double total = 0.0;
    for (const auto& [key, rows] : groups) {
        check(rows.size() >= 2, "effective_sv_90: instance " + std::to_string(key) +
                                    " has fewer than 2 views");
        const Eigen::VectorXd sv = singular_values(centered_group(features, rows));
        double mass = 0.0;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            mass += sigma_squared ? sv(i) * sv(i) : sv(i);
        }
        std::int64_t r = 0;
        if (mass > 0.0) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < sv.size(); ++i) {
                acc += sigma_squared ? sv(i) * sv(i) : sv(i);
                if (acc >= 0.9 * mass) {
                    r = i + 1;
                    break;
                }
            }
        }
        total += static_cast<double>(r);
    }
    return total / static_cast<double>(groups.size());
}

double nuclear_norm(const FeatureMatrix& features, bool raw_mode) {
    check_features(features, "nuclear_norm");
    const auto groups = group_by_instance(features);
    check(!groups.empty(), "nuclear_norm: no instance groups");
    double total = 0.0;
    for (const auto& [key, rows] : groups) {
        RowMat m;
        if (raw_mode) {
            m.resize(static_cast<Eigen::Index>(rows.size()), features.cols);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::int64_t j = 0; j < features.cols; ++j) {
                    m(static_cast<Eigen::Index>(i), j) = features.at(rows[i], j);
                }
            }
        } else {
            check(rows.size() >= 2, "nuclear_norm: instance " + std::to_string(key) +
                                        " has fewer than 2 views");
            m = centered_group(features, rows);
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                const double n = m.row(i).norm();
                if (n > 0.0) m.row(i) /= n;
            }
        }
        total += singular_values(m).sum();
    }
    return total / static_cast<double>(groups.size());
}

double kernel_regression_error(const FeatureMatrix& features, const KernelConfig& config,
                               int* skipped_instances) {
    check_features(features, "kernel_regression_error");
    const auto groups = group_by_instance(features);
    check(!groups.empty(), "kernel_regression_error: no instance groups");
    int skipped = 0;
    double total = 0.0;
    std::int64_t used = 0;
    for (const auto& [key, rows] : groups) {
        const std::int64_t v = static_cast<std::int64_t>(rows.size());
        if (v < 3) {
            std::fprintf(stderr,
                         "kernel_regression_error: skipping instance %lld with %lld views\n",
                         static_cast<long long>(key), static_cast<long long>(v));
            ++skipped;
            continue;
        }
        // group-level bandwidth so every leave-one-out fold sees one kernel
        FeatureMatrix sub;
        sub.rows = v;
        sub.cols = features.cols;
        for (std::int64_t r : rows) {
            sub.values.insert(sub.values.end(),
                              features.values.begin() + static_cast<std::ptrdiff_t>(r * features.cols),
                              features.values.begin() +
                                  static_cast<std::ptrdiff_t>((r + 1) * features.cols));
            sub.category.push_back(features.category[static_cast<std::size_t>(r)]);
            sub.angle_deg.push_back(features.angle_deg[static_cast<std::size_t>(r)]);
            sub.instance_key.push_back(features.instance_key[static_cast<std::size_t>(r)]);
        }
        const double bw = config.rule == BandwidthRule::Fixed
                              ? config.bandwidth
                              : median_heuristic_bandwidth(sub);
        const Eigen::MatrixXd kfull = rbf_from_sqdist(cross_sqdist(sub, sub), bw);
        const Eigen::MatrixXd yfull = circular_targets(sub.angle_deg);

        double inst_err = 0.0;
        for (std::int64_t hold = 0; hold < v; ++hold) {
            Eigen::MatrixXd k(v - 1, v - 1);
            Eigen::MatrixXd y(v - 1, 2);
            Eigen::RowVectorXd kx(v - 1);
            std::int64_t ii = 0;
            for (std::int64_t i = 0; i < v; ++i) {
                if (i == hold) continue;
                std::int64_t jj = 0;
                for (std::int64_t j = 0; j < v; ++j) {
                    if (j == hold) continue;
                    k(ii, jj++) = kfull(i, j);
                }
                y.row(ii) = yfull.row(i);
                kx(ii) = kfull(hold, i);
                ++ii;
            }
            const KrrSolve solve = krr_solve(k, y, config.lambda_r);
            const Eigen::MatrixXd pred = kx * solve.alpha;  // 1 x 2
            const double est = predicted_angle(pred(0, 0), pred(0, 1));
            inst_err += abs_angular_error(est, sub.angle_deg[static_cast<std::size_t>(hold)]);
        }
        total += inst_err / static_cast<double>(v);
        ++used;
    }
    if (skipped_instances) *skipped_instances = skipped;
    check(used > 0, "kernel_regression_error: every instance was skipped");
    return total / static_cast<double>(used);
}

FeatureMatrix project_columns(const FeatureMatrix& features, std::int64_t budget,
                              std::uint64_t seed) {
    check_features(features, "project_columns");
    check(budget >= 1, "project_columns: budget must be positive");
    if (features.cols <= budget) return features;

    FeatureMatrix out;
    out.rows = features.rows;
    out.cols = budget;
    out.values.assign(static_cast<std::size_t>(out.rows * out.cols), 0.0);
    out.category = features.category;
    out.angle_deg = features.angle_deg;
    out.instance_key = features.instance_key;

    const double scale = 1.0 / std::sqrt(static_cast<double>(budget));
    // one sign stream per input column keeps the projection independent of
    // row count
    for (std::int64_t i = 0; i < features.cols; ++i) {
        Rng rng(mix_seed(seed, 0x51700000ull + static_cast<std::uint64_t>(i)));
        for (std::int64_t j = 0; j < budget; ++j) {
            const double sgn = (rng.next_u64() & 1ull) ? scale : -scale;
            for (std::int64_t r = 0; r < features.rows; ++r) {
                out.values[static_cast<std::size_t>(r * budget + j)] +=
                    sgn * features.at(r, i);
            }
        }
    }
    return out;
}

namespace {

double select_lambda_and_score(const FeatureMatrix& train, const FeatureMatrix& val,
                               const FeatureMatrix& test, const ProbeOptions& options,
                               PoseProbeResult& out) {
    const double bw = options.kernel.rule == BandwidthRule::Fixed
                          ? options.kernel.bandwidth
                          : median_heuristic_bandwidth(train);
    const Eigen::MatrixXd ktr = rbf_from_sqdist(cross_sqdist(train, train), bw);
    const Eigen::MatrixXd y = circular_targets(train.angle_deg);
    const Eigen::MatrixXd kva = rbf_from_sqdist(cross_sqdist(val, train), bw);

    double best_lambda = options.lambda_grid.front();
    double best_aaai = -1.0;
    for (double lam : options.lambda_grid) {
        const KrrSolve solve = krr_solve(ktr, y, lam);
        const PoseProbeResult r = score_pose_predictions(kva * solve.alpha, val.angle_deg);
        if (r.aaai > best_aaai) {
            best_aaai = r.aaai;
            best_lambda = lam;
        }
    }
    const KrrSolve final_solve = krr_solve(ktr, y, best_lambda);
    const Eigen::MatrixXd kte = rbf_from_sqdist(cross_sqdist(test, train), bw);
    out = score_pose_predictions(kte * final_solve.alpha, test.angle_deg);
    return best_lambda;
}

std::vector<std::int64_t> strided_subsample(const std::vector<std::int64_t>& ids,
                                            std::int64_t cap) {
    const std::int64_t n = static_cast<std::int64_t>(ids.size());
    if (n <= cap) return ids;
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(cap));
    for (std::int64_t i = 0; i < cap; ++i) out.push_back(ids[static_cast<std::size_t>(i * n / cap)]);
    return out;
}

}  // namespace

ProbeReport run_layer_sweep(Network& net, const Dataset& data, const ProbeOptions& options,
                            const std::string& layer_prefix, bool task_specific_net) {
    const auto train_ids = strided_subsample(data.split_indices(Split::Train), options.train_cap);
    const auto val_ids = strided_subsample(data.split_indices(Split::Val), options.eval_cap);
    const auto test_ids = strided_subsample(data.split_indices(Split::Test), options.eval_cap);
    check(!train_ids.empty() && !val_ids.empty() && !test_ids.empty(),
          "run_layer_sweep: dataset is missing a split");

    std::vector<std::string> shared_names{"input"};
    for (const auto& layer : net.spec().shared_prefix) shared_names.push_back(layer.name);

    ProbeReport report;
    for (const auto& layer : net.layer_names()) {
        FeatureMatrix ftr = extract_features(net, data, train_ids, layer);
        FeatureMatrix fva = extract_features(net, data, val_ids, layer);
        FeatureMatrix fte = extract_features(net, data, test_ids, layer);

        ProbeRow row;
        row.layer = layer_prefix + layer;
        const bool shared = std::find(shared_names.begin(), shared_names.end(), layer) !=
                            shared_names.end();
        row.cross_eval = (task_specific_net && layer != "input") ||
                         (net.spec().branches.size() >= 2 && !shared);

        row.cat_acc = linear_category_probe(ftr, fte, options.linear);
        PoseProbeResult pose;
        select_lambda_and_score(ftr, fva, fte, options, pose);
        row.pose_aaai = pose.aaai;
        row.pose_mae_deg = pose.mae_deg;

        const int kmax = *std::max_element(kKnnKs.begin(), kKnnKs.end());
        const auto table = knn_table(ftr, fte, std::min<int>(kmax, static_cast<int>(ftr.rows)));
        for (std::size_t i = 0; i < kKnnKs.size(); ++i) {
            const int k = std::min<int>(kKnnKs[i], static_cast<int>(ftr.rows));
            row.knn_cat[i] = knn_category_from_table(table, ftr, fte, k);
            row.knn_pose_aaai[i] = knn_pose_from_table(table, ftr, fte, k).aaai;
        }

        const FeatureMatrix proj = project_columns(fte, options.column_budget, options.seed);
        row.eff_sv90 = effective_sv_90(proj);
        row.nuclear = nuclear_norm(proj);
        row.kreg_err_deg = kernel_regression_error(proj, options.kernel);

        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_probe_csv(const ProbeReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_probe_csv: cannot open '" + path + "'");
    os << "# kreg_err_deg approximates the kernel-PLS regression error by leave-one-out "
          "kernel ridge regression\n";
    os << "layer,cat_acc,pose_aaai,pose_mae_deg";
    for (int k : kKnnKs) os << ",knn_cat_k" << k;
    for (int k : kKnnKs) os << ",knn_pose_aaai_k" << k;
    os << ",eff_sv90,nuclear_norm,kreg_err_deg,cross_eval\n";
    char buf[64];
    auto put = [&os, &buf](double v) {
        std::snprintf(buf, sizeof buf, ",%.10g", v);
        os << buf;
    };
    for (const auto& row : report.rows) {
        os << row.layer;
        put(row.cat_acc);
        put(row.pose_aaai);
        put(row.pose_mae_deg);
        for (double v : row.knn_cat) put(v);
        for (double v : row.knn_pose_aaai) put(v);
        put(row.eff_sv90);
        put(row.nuclear);
        put(row.kreg_err_deg);
        os << "," << (row.cross_eval ? 1 : 0) << "\n";
    }
}

}  // namespace poselab
