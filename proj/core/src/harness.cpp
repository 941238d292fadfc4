#include "poselab/harness.hpp"

#include "poselab/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace poselab {

PoseRule parse_pose_rule(const std::string& text) {
    if (text == "argmax") return PoseRule::Argmax;
    if (text == "expected") return PoseRule::Expected;
    if (text == "both") return PoseRule::Both;
    throw std::invalid_argument("pose_rule must be argmax, expected or both; got '" + text + "'");
}

std::string pose_rule_name(PoseRule rule) {
    switch (rule) {
        case PoseRule::Argmax: return "argmax";
        case PoseRule::Expected: return "expected";
        case PoseRule::Both: return "both";
    }
    throw std::logic_error("pose_rule_name: bad enum");
}

SolverConfig ExperimentConfig::solver() const {
    SolverConfig s;
    s.base_lr = base_lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.gamma = gamma;
    s.decay_interval = decay_interval;
    return s;
}

void ExperimentConfig::validate() const {
    check(labels.num_categories >= 2, "config: categories must be >= 2");
    check(labels.num_pose_bins >= 1, "config: pose_bins must be >= 1");
    check(lambda1 >= 0.0 && lambda2 >= 0.0, "config: lambda weights must be nonnegative");
    check(base_lr > 0.0, "config: base_lr must be positive");
    check(gamma > 0.0, "config: gamma must be positive");
    check(decay_interval >= 1, "config: decay_interval must be >= 1");
    check(momentum >= 0.0 && momentum < 1.0, "config: momentum must be in [0, 1)");
    check(weight_decay >= 0.0, "config: weight_decay must be nonnegative");
    check(batch_size >= 1, "config: batch_size must be >= 1");
    check(max_iterations >= 1, "config: max_iterations must be >= 1");
    check(eval_interval >= 1, "config: eval_interval must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
    }
    if (used != value.size()) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(value, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
    }
    if (used != value.size()) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
    }
    return v;
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::string profile_name = "desk";
    int image_size = 32;
    bool saw_image_size = false;

    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": empty key or value");
        }

        if (key == "model") {
            cfg.kind.family = parse_family(value);
        } else if (key == "ebm_width") {
            cfg.kind.ebm_width = parse_int(key, value);
        } else if (key == "categories") {
            cfg.labels.num_categories = parse_int(key, value);
        } else if (key == "pose_bins") {
            cfg.labels.num_pose_bins = parse_int(key, value);
        } else if (key == "dataset") {
            cfg.dataset = value;
        } else if (key == "lambda1") {
            cfg.lambda1 = parse_double(key, value);
        } else if (key == "lambda2") {
            cfg.lambda2 = parse_double(key, value);
        } else if (key == "base_lr") {
            cfg.base_lr = parse_double(key, value);
        } else if (key == "gamma") {
            cfg.gamma = parse_double(key, value);
        } else if (key == "decay_interval") {
            cfg.decay_interval = parse_int(key, value);
        } else if (key == "momentum") {
            cfg.momentum = parse_double(key, value);
        } else if (key == "weight_decay") {
            cfg.weight_decay = parse_double(key, value);
        } else if (key == "batch_size") {
            cfg.batch_size = parse_int(key, value);
        } else if (key == "max_iterations") {
            cfg.max_iterations = parse_int(key, value);
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
        } else if (key == "warm_start") {
            cfg.warm_start = value;
        } else if (key == "pose_rule") {
            cfg.pose_rule = parse_pose_rule(value);
        } else if (key == "profile") {
            if (value != "desk" && value != "full") {
                throw std::invalid_argument("config: profile must be desk or full, got '" +
                                            value + "'");
            }
            profile_name = value;
        } else if (key == "image_size") {
            image_size = static_cast<int>(parse_int(key, value));
            saw_image_size = true;
        } else if (key == "eval_interval") {
            cfg.eval_interval = parse_int(key, value);
        } else {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        }
    }

    if (profile_name == "full") {
        check(!saw_image_size, "config: image_size only applies to the desk profile");
        cfg.profile = ScaleProfile::full_scale();
    } else {
        cfg.profile = ScaleProfile::desk(8, image_size);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_experiment_config_text(buf.str());
}

void ConvergenceLog::append(Record rec) {
    if (!records.empty()) {
        check(rec.iter > records.back().iter, "convergence log: iterations must increase");
        check(rec.lr <= records.back().lr, "convergence log: learning rate must not increase");
    }
    records.push_back(rec);
}

void write_convergence_csv(const ConvergenceLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "iter,lr,cat_err,pose_err,loss\n";
    char buf[160];
    for (const auto& r : log.records) {
        std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g,%.10g,%.10g\n",
                      static_cast<long long>(r.iter), r.lr, r.cat_err, r.pose_err, r.loss);
        os << buf;
    }
}

void write_results_csv(const std::vector<LabeledResultsRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "model,split,category_acc,pose_acc_22_5,pose_acc_45,pose_aaai_argmax,"
          "pose_aaai_expected\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.model.c_str(),
                      r.split.c_str(), r.row.category_pct, r.row.pose_22_5_pct,
                      r.row.pose_45_pct, r.row.aaai_argmax_pct, r.row.aaai_expected_pct);
        os << buf;
    }
}

JointModel JointModel::create(const ExperimentConfig& config) {
    config.validate();
    JointModel m;
    m.kind_ = config.kind;
    m.labels_ = config.labels;
    const auto specs = build_topology(config.kind, config.labels, config.profile);
    const std::optional<std::string> warm =
        config.warm_start.empty() ? std::nullopt : std::make_optional(config.warm_start);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        m.nets_.push_back(instantiate(specs[i],
                                      mix_seed(config.seed, 0x4E540000ull + i), warm));
    }
    return m;
}

namespace {

int argmax_row(const Tensor& t, std::int64_t row) {
    const std::int64_t k = t.dim(1);
    int best = 0;
    for (std::int64_t j = 1; j < k; ++j) {
        if (t.data[static_cast<std::size_t>(row * k + j)] >
            t.data[static_cast<std::size_t>(row * k + best)]) {
            best = static_cast<int>(j);
        }
    }
    return best;
}

}  // namespace

void JointModel::predict(const Tensor& images, std::vector<std::vector<double>>& cat_dist,
                         std::vector<PoseDistribution>& pose_dist) {
    const std::int64_t n = images.dim(0);
    const std::int64_t C = labels_.num_categories;
    const std::int64_t P = labels_.num_pose_bins;
    cat_dist.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(C)));
    pose_dist.assign(static_cast<std::size_t>(n), PoseDistribution{});

    auto fill_rows = [n](const Tensor& probs, auto&& sink) {
        const std::int64_t k = probs.dim(1);
        for (std::int64_t i = 0; i < n; ++i) {
            std::vector<double> row(static_cast<std::size_t>(k));
            for (std::int64_t j = 0; j < k; ++j) {
                row[static_cast<std::size_t>(j)] = probs.data[static_cast<std::size_t>(i * k + j)];
            }
            sink(i, std::move(row));
        }
    };

    switch (kind_.family) {
        case ModelFamily::Base: {
            const Tensor probs = softmax_rows(nets_[0].forward(images, Phase::Eval)[0]);
            fill_rows(probs, [&](std::int64_t i, std::vector<double>&& row) {
                cat_dist[static_cast<std::size_t>(i)] = std::move(row);
            });
            for (auto& pd : pose_dist) {
                pd.probs.assign(static_cast<std::size_t>(P), 1.0 / static_cast<double>(P));
            }
            return;
        }
        case ModelFamily::PM: {
            const Tensor cat = softmax_rows(nets_[0].forward(images, Phase::Eval)[0]);
            const Tensor pose = softmax_rows(nets_[1].forward(images, Phase::Eval)[0]);
            fill_rows(cat, [&](std::int64_t i, std::vector<double>&& row) {
                cat_dist[static_cast<std::size_t>(i)] = std::move(row);
            });
            fill_rows(pose, [&](std::int64_t i, std::vector<double>&& row) {
                pose_dist[static_cast<std::size_t>(i)].probs = std::move(row);
            });
            return;
        }
        case ModelFamily::CPM: {
            const Tensor joint = softmax_rows(nets_[0].forward(images, Phase::Eval)[0]);
            for (std::int64_t i = 0; i < n; ++i) {
                auto& cd = cat_dist[static_cast<std::size_t>(i)];
                auto& pd = pose_dist[static_cast<std::size_t>(i)].probs;
                cd.assign(static_cast<std::size_t>(C), 0.0);
                pd.assign(static_cast<std::size_t>(P), 0.0);
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t p = 0; p < P; ++p) {
                        const double v = joint.data[static_cast<std::size_t>(
                            i * C * P + cpm_encode(c, p, labels_))];
                        cd[static_cast<std::size_t>(c)] += v;
                        pd[static_cast<std::size_t>(p)] += v;
                    }
                }
            }
            return;
        }
        case ModelFamily::LBM:
        case ModelFamily::EBM: {
            const auto logits = nets_[0].forward(images, Phase::Eval);
            const Tensor cat = softmax_rows(logits[0]);
            const Tensor pose = softmax_rows(logits[1]);
            fill_rows(cat, [&](std::int64_t i, std::vector<double>&& row) {
                cat_dist[static_cast<std::size_t>(i)] = std::move(row);
            });
            fill_rows(pose, [&](std::int64_t i, std::vector<double>&& row) {
                pose_dist[static_cast<std::size_t>(i)].probs = std::move(row);
            });
            return;
        }
    }
    throw std::logic_error("predict: bad model family");
}

JointModel::StepStats JointModel::train_step(const Dataset::Batch& batch, double lambda1,
                                             double lambda2) {
    const std::int64_t n = batch.images.dim(0);
    StepStats stats;

    switch (kind_.family) {
        case ModelFamily::Base: {
            ForwardCache cache;
            const auto logits = nets_[0].forward(batch.images, Phase::Train, &cache);
            const auto r = softmax_ce_batch(logits[0], batch.category, lambda1);
            nets_[0].backward(cache, {r.dlogits});
            stats.loss = lambda1 * r.mean_loss;
            stats.cat_err = static_cast<double>(r.errors) / static_cast<double>(n);
            std::int64_t off = 0;  // uniform pose stub predicts bin 0
            for (int b : batch.pose_bin) off += b != 0 ? 1 : 0;
            stats.pose_err = static_cast<double>(off) / static_cast<double>(n);
            return stats;
        }
        case ModelFamily::PM: {
            ForwardCache cache_c, cache_p;
            const auto logits_c = nets_[0].forward(batch.images, Phase::Train, &cache_c);
            const auto logits_p = nets_[1].forward(batch.images, Phase::Train, &cache_p);
            const auto rc = softmax_ce_batch(logits_c[0], batch.category, lambda1);
            const auto rp = softmax_ce_batch(logits_p[0], batch.pose_bin, lambda2);
            nets_[0].backward(cache_c, {rc.dlogits});
            nets_[1].backward(cache_p, {rp.dlogits});
            stats.loss = lambda1 * rc.mean_loss + lambda2 * rp.mean_loss;
            stats.cat_err = static_cast<double>(rc.errors) / static_cast<double>(n);
            stats.pose_err = static_cast<double>(rp.errors) / static_cast<double>(n);
            return stats;
        }
        case ModelFamily::CPM: {
            std::vector<int> joint_labels(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) {
                joint_labels[static_cast<std::size_t>(i)] = static_cast<int>(
                    cpm_encode(batch.category[static_cast<std::size_t>(i)],
                               batch.pose_bin[static_cast<std::size_t>(i)], labels_));
            }
            ForwardCache cache;
            const auto logits = nets_[0].forward(batch.images, Phase::Train, &cache);
            const auto r = softmax_ce_batch(logits[0], joint_labels, lambda1);
            nets_[0].backward(cache, {r.dlogits});
            stats.loss = lambda1 * r.mean_loss;

            // per-task errors from the marginals of the joint softmax
            const Tensor probs = softmax_rows(logits[0]);
            const std::int64_t C = labels_.num_categories;
            const std::int64_t P = labels_.num_pose_bins;
            std::int64_t cerr = 0, perr = 0;
            std::vector<double> cm(static_cast<std::size_t>(C));
            std::vector<double> pm(static_cast<std::size_t>(P));
            for (std::int64_t i = 0; i < n; ++i) {
                std::fill(cm.begin(), cm.end(), 0.0);
                std::fill(pm.begin(), pm.end(), 0.0);
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t p = 0; p < P; ++p) {
                        const double v = probs.data[static_cast<std::size_t>(
                            i * C * P + cpm_encode(c, p, labels_))];
                        cm[static_cast<std::size_t>(c)] += v;
                        pm[static_cast<std::size_t>(p)] += v;
                    }
                }
                const auto cbest = std::max_element(cm.begin(), cm.end()) - cm.begin();
                const auto pbest = std::max_element(pm.begin(), pm.end()) - pm.begin();
                if (static_cast<int>(cbest) != batch.category[static_cast<std::size_t>(i)]) ++cerr;
                if (static_cast<int>(pbest) != batch.pose_bin[static_cast<std::size_t>(i)]) ++perr;
            }
            stats.cat_err = static_cast<double>(cerr) / static_cast<double>(n);
            stats.pose_err = static_cast<double>(perr) / static_cast<double>(n);
            return stats;
        }
        case ModelFamily::LBM:
        case ModelFamily::EBM: {
            ForwardCache cache;
            const auto logits = nets_[0].forward(batch.images, Phase::Train, &cache);
            const auto rc = softmax_ce_batch(logits[0], batch.category, lambda1);
            const auto rp = softmax_ce_batch(logits[1], batch.pose_bin, lambda2);
            nets_[0].backward(cache, {rc.dlogits, rp.dlogits});
            stats.loss = lambda1 * rc.mean_loss + lambda2 * rp.mean_loss;
            stats.cat_err = static_cast<double>(rc.errors) / static_cast<double>(n);
            stats.pose_err = static_cast<double>(rp.errors) / static_cast<double>(n);
            return stats;
        }
    }
    throw std::logic_error("train_step: bad model family");
}

void JointModel::sgd_update(double lr, double momentum, double weight_decay) {
    for (auto& net : nets_) {
        auto params = net.parameters();
        sgd_step_all(params, lr, momentum, weight_decay);
    }
}

void JointModel::zero_grads() {
    for (auto& net : nets_) net.zero_grads();
}

std::vector<CheckpointRecord> JointModel::to_records() const {
    if (kind_.family != ModelFamily::PM) return nets_[0].to_records();
    auto records = nets_[0].to_records("category/");
    const auto pose = nets_[1].to_records("pose/");
    records.insert(records.end(), pose.begin(), pose.end());
    return records;
}

void JointModel::load_records(const std::vector<CheckpointRecord>& records) {
    if (kind_.family != ModelFamily::PM) {
        nets_[0].load_records(records);
        return;
    }
    nets_[0].load_records(records, "category/");
    nets_[1].load_records(records, "pose/");
}

void JointModel::save(const std::string& path) const { save_checkpoint(path, to_records()); }

void JointModel::load(const std::string& path) { load_records(load_checkpoint(path)); }

namespace {

void check_dataset_labels(const Dataset& data, const LabelSpace& labels) {
    check(data.manifest().config.categories == labels.num_categories,
          "dataset has " + std::to_string(data.manifest().config.categories) +
              " categories but the model expects " + std::to_string(labels.num_categories));
}

}  // namespace

ResultsRow evaluate_ids(JointModel& model, const Dataset& data,
                        const std::vector<std::int64_t>& ids, PoseRule rule) {
    check(!ids.empty(), "evaluate: no samples");
    check_dataset_labels(data, model.labels());
    const PoseBinning binning(static_cast<int>(model.labels().num_pose_bins));

    Dataset::BatchOptions opts;
    opts.crop_size = model.nets()[0].spec().profile.image_size;
    opts.binning = binning;
    opts.train_mode = false;

    std::int64_t correct = 0;
    std::vector<double> rule_errors;
    double aaai_arg = 0.0, aaai_exp = 0.0;
    rule_errors.reserve(ids.size());

    const std::size_t chunk = 64;
    std::vector<std::vector<double>> cat_dist;
    std::vector<PoseDistribution> pose_dist;
    for (std::size_t start = 0; start < ids.size(); start += chunk) {
        const std::size_t stop = std::min(ids.size(), start + chunk);
        const std::vector<std::int64_t> part(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                             ids.begin() + static_cast<std::ptrdiff_t>(stop));
        const auto batch = data.load_batch(part, opts);
        model.predict(batch.images, cat_dist, pose_dist);
        for (std::size_t i = 0; i < part.size(); ++i) {
            const auto& cd = cat_dist[i];
            int best = 0;
            for (std::size_t c = 1; c < cd.size(); ++c) {
                if (cd[c] > cd[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
            }
            if (best == batch.category[i]) ++correct;

            const double truth = batch.angle_deg[i];
            const double est_arg = argmax_pose(pose_dist[i], binning);
            const double est_exp = expected_pose(pose_dist[i], binning);
            const double err_arg = abs_angular_error(est_arg, truth);
            const double err_exp = abs_angular_error(est_exp, truth);
            rule_errors.push_back(rule == PoseRule::Expected ? err_exp : err_arg);
            aaai_arg += 1.0 - err_arg / 180.0;
            aaai_exp += 1.0 - err_exp / 180.0;
        }
    }

    const double n = static_cast<double>(ids.size());
    ResultsRow row;
    row.category_pct = 100.0 * static_cast<double>(correct) / n;
    row.pose_22_5_pct = 100.0 * threshold_accuracy(rule_errors, 22.5);
    row.pose_45_pct = 100.0 * threshold_accuracy(rule_errors, 45.0);
    row.aaai_argmax_pct = 100.0 * aaai_arg / n;
    row.aaai_expected_pct = 100.0 * aaai_exp / n;
    return row;
}

ResultsRow evaluate_model(JointModel& model, const Dataset& data, Split split, PoseRule rule) {
    return evaluate_ids(model, data, data.split_indices(split), rule);
}

TrainResult train(const ExperimentConfig& config, const Dataset& data,
                  const std::string& out_dir, const std::string& run_name) {
    config.validate();
    check_dataset_labels(data, config.labels);
    std::filesystem::create_directories(out_dir);

    JointModel model = JointModel::create(config);
    const SolverConfig solver = config.solver();

    auto train_ids = data.split_indices(Split::Train);
    const auto val_ids = data.split_indices(Split::Val);
    check(static_cast<std::int64_t>(train_ids.size()) >= config.batch_size,
          "train split smaller than one batch");

    Dataset::BatchOptions opts;
    opts.crop_size = config.profile.image_size;
    opts.binning = PoseBinning(static_cast<int>(config.labels.num_pose_bins));
    opts.train_mode = true;

    Rng shuffle_rng(mix_seed(config.seed, 0x54FF1Eull));
    Rng crop_rng(mix_seed(config.seed, 0xC209ull));

    TrainResult result;
    result.final_checkpoint = out_dir + "/" + run_name + "-final.ckpt";
    result.best_checkpoint = out_dir + "/" + run_name + "-best.ckpt";
    result.best_val_metric = -std::numeric_limits<double>::infinity();

    std::size_t pos = train_ids.size();  // forces a shuffle before the first batch
    for (std::int64_t it = 0; it < config.max_iterations; ++it) {
        if (pos + static_cast<std::size_t>(config.batch_size) > train_ids.size()) {
            shuffle_rng.shuffle(train_ids);
            pos = 0;
        }
        const std::vector<std::int64_t> batch_ids(
            train_ids.begin() + static_cast<std::ptrdiff_t>(pos),
            train_ids.begin() + static_cast<std::ptrdiff_t>(pos + config.batch_size));
        pos += static_cast<std::size_t>(config.batch_size);

        const auto batch = data.load_batch(batch_ids, opts, &crop_rng);
        const auto stats = model.train_step(batch, config.lambda1, config.lambda2);
        if (!std::isfinite(stats.loss)) {
            std::string ids_text;
            for (auto id : batch_ids) ids_text += std::to_string(id) + " ";
            throw std::runtime_error("training aborted at iteration " + std::to_string(it) +
                                     ": non-finite loss; batch sample ids: " + ids_text);
        }
        const double lr = lr_at(solver, it);
        model.sgd_update(lr, config.momentum, config.weight_decay);
        model.zero_grads();
        result.log.append({it, lr, stats.cat_err, stats.pose_err, stats.loss});

        const std::int64_t done = it + 1;
        if (done % config.eval_interval == 0 || done == config.max_iterations) {
            const ResultsRow val = evaluate_ids(model, data, val_ids, config.pose_rule);
            result.val_history.push_back(
                {done, 1.0 - val.category_pct / 100.0, val.aaai_argmax_pct / 100.0});
            const double metric = 0.5 * (val.category_pct + val.aaai_argmax_pct);
            if (metric > result.best_val_metric) {
                result.best_val_metric = metric;
                result.best_iter = done;
                model.save(result.best_checkpoint);
            }
        }
    }

    model.save(result.final_checkpoint);
    write_convergence_csv(result.log, out_dir + "/" + run_name + "-convergence.csv");
    return result;
}

double overfit_one_batch(const ExperimentConfig& config, const Dataset& data,
                         std::int64_t iterations) {
    config.validate();
    check_dataset_labels(data, config.labels);
    JointModel model = JointModel::create(config);
    const SolverConfig solver = config.solver();

    const auto train_ids = data.split_indices(Split::Train);
    check(static_cast<std::int64_t>(train_ids.size()) >= config.batch_size,
          "train split smaller than one batch");
    const std::vector<std::int64_t> batch_ids(
        train_ids.begin(), train_ids.begin() + static_cast<std::ptrdiff_t>(config.batch_size));

    Dataset::BatchOptions opts;
    opts.crop_size = config.profile.image_size;
    opts.binning = PoseBinning(static_cast<int>(config.labels.num_pose_bins));
    opts.train_mode = false;  // fixed center crop so the batch repeats exactly

    const auto batch = data.load_batch(batch_ids, opts);
    double loss = 0.0;
    for (std::int64_t it = 0; it < iterations; ++it) {
        const auto stats = model.train_step(batch, config.lambda1, config.lambda2);
        check(std::isfinite(stats.loss),
              "overfit_one_batch: non-finite loss at iteration " + std::to_string(it));
        model.sgd_update(lr_at(solver, it), config.momentum, config.weight_decay);
        model.zero_grads();
        loss = stats.loss;
    }
    return loss;
}

std::vector<LambdaSweepRow> lambda_sweep(const ExperimentConfig& base,
                                         const std::vector<std::pair<double, double>>& grid,
                                         const Dataset& data, const std::string& out_dir,
                                         const std::string& run_name) {
    check(!grid.empty(), "lambda_sweep: empty grid");
    std::vector<LambdaSweepRow> rows;
    for (const auto& [l1, l2] : grid) {
        ExperimentConfig cfg = base;
        cfg.lambda1 = l1;
        cfg.lambda2 = l2;
        char tag[64];
        std::snprintf(tag, sizeof tag, "%s-l%gx%g", run_name.c_str(), l1, l2);
        const TrainResult tr = train(cfg, data, out_dir, tag);

        JointModel best = JointModel::create(cfg);
        best.load(tr.best_checkpoint);
        rows.push_back({l1, l2, evaluate_model(best, data, Split::Test, cfg.pose_rule)});
    }

    const std::string path = out_dir + "/" + run_name + "-lambda-sweep.csv";
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "lambda1,lambda2,category_acc,pose_acc_22_5,pose_acc_45,pose_aaai_argmax,"
          "pose_aaai_expected\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%g,%g,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.lambda1, r.lambda2,
                      r.test.category_pct, r.test.pose_22_5_pct, r.test.pose_45_pct,
                      r.test.aaai_argmax_pct, r.test.aaai_expected_pct);
        os << buf;
    }
    return rows;
}

ConvergenceCompare convergence_compare(
    const std::vector<std::pair<std::string, ExperimentConfig>>& runs, const Dataset& data,
    double aaai_threshold, const std::string& out_dir, const std::string& run_name) {
    check(!runs.empty(), "convergence_compare: no runs");
    for (const auto& [name, cfg] : runs) {
        check(cfg.eval_interval == runs.front().second.eval_interval &&
                  cfg.max_iterations == runs.front().second.max_iterations,
              "convergence_compare: run '" + name + "' has a mismatched eval cadence");
    }

    ConvergenceCompare cmp;
    for (const auto& [name, cfg] : runs) {
        cmp.names.push_back(name);
        const TrainResult tr = train(cfg, data, out_dir, run_name + "-" + name);
        if (cmp.iters.empty()) {
            for (const auto& v : tr.val_history) cmp.iters.push_back(v.iter);
        }
        check(tr.val_history.size() == cmp.iters.size(),
              "convergence_compare: run '" + name + "' produced a misaligned curve");
        std::int64_t reach = -1;
        for (const auto& v : tr.val_history) {
            if (v.pose_aaai >= aaai_threshold) {
                reach = v.iter;
                break;
            }
        }
        cmp.iters_to_threshold.push_back(reach);
        cmp.history.push_back(tr.val_history);
    }

    write_convergence_compare_csv(cmp, aaai_threshold,
                                  out_dir + "/" + run_name + "-convergence-compare.csv");
    return cmp;
}

void write_convergence_compare_csv(const ConvergenceCompare& cmp, double aaai_threshold,
                                   const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (std::size_t m = 0; m < cmp.names.size(); ++m) {
        os << "# " << cmp.names[m] << " iterations to val pose AAAI >= " << aaai_threshold
           << ": ";
        if (cmp.iters_to_threshold[m] < 0) {
            os << "not reached\n";
        } else {
            os << cmp.iters_to_threshold[m] << "\n";
        }
    }
    os << "iter";
    for (const auto& name : cmp.names) {
        os << "," << name << "_val_cat_err," << name << "_val_pose_aaai";
    }
    os << "\n";
    char buf[64];
    for (std::size_t i = 0; i < cmp.iters.size(); ++i) {
        os << cmp.iters[i];
        for (std::size_t m = 0; m < cmp.names.size(); ++m) {
            std::snprintf(buf, sizeof buf, ",%.6f,%.6f", cmp.history[m][i].cat_err,
                          cmp.history[m][i].pose_aaai);
            os << buf;
        }
        os << "\n";
    }
}

}  // namespace poselab
