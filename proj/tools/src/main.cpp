#include "poselab/harness.hpp"
#include "poselab/probes.hpp"
#include "poselab/synth_data.hpp"
#include "poselab/topology.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

using namespace poselab;

int cmd_generate_data(const DataConfig& cfg, const std::string& out_dir) {
    const Dataset data = Dataset::generate(cfg, out_dir);
    std::printf("wrote %zu samples to %s (blob %s)\n", data.manifest().records.size(),
                out_dir.c_str(), data.manifest().blob_file.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, std::string name) {
    const ExperimentConfig cfg = parse_experiment_config(config_path);
    if (name.empty()) name = family_name(cfg.kind.family);
    const Dataset data = Dataset::load(cfg.dataset);
    const TrainResult result = train(cfg, data, out_dir, name);
    std::printf("trained %s for %lld iterations\n", name.c_str(),
                static_cast<long long>(cfg.max_iterations));
    std::printf("best validation metric %.4f at iteration %lld\n", result.best_val_metric,
                static_cast<long long>(result.best_iter));
    std::printf("final checkpoint: %s\n", result.final_checkpoint.c_str());
    std::printf("best checkpoint:  %s\n", result.best_checkpoint.c_str());
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& split_text, const std::string& out_csv) {
    const ExperimentConfig cfg = parse_experiment_config(config_path);
    const Dataset data = Dataset::load(cfg.dataset);
    JointModel model = JointModel::create(cfg);
    model.load(checkpoint);
    const Split split = parse_split(split_text);
    const ResultsRow row = evaluate_model(model, data, split, cfg.pose_rule);
    std::printf("model=%s split=%s category=%.2f%% pose<22.5=%.2f%% pose<45=%.2f%% "
                "aaai(argmax)=%.2f%% aaai(expected)=%.2f%%\n",
                family_name(cfg.kind.family).c_str(), split_text.c_str(), row.category_pct,
                row.pose_22_5_pct, row.pose_45_pct, row.aaai_argmax_pct, row.aaai_expected_pct);
    if (!out_csv.empty()) {
        write_results_csv({{family_name(cfg.kind.family), split_text, row}}, out_csv);
        std::printf("wrote %s\n", out_csv.c_str());
    }
    return 0;
}

int cmd_probe(const std::string& config_path, const std::string& checkpoint,
              const std::string& out_csv, ProbeOptions options) {
    const ExperimentConfig cfg = parse_experiment_config(config_path);
    const Dataset data = Dataset::load(cfg.dataset);
    JointModel model = JointModel::create(cfg);
    if (!checkpoint.empty()) model.load(checkpoint);

    ProbeReport report;
    if (cfg.kind.family == ModelFamily::PM) {
        const char* prefixes[] = {"category/", "pose/"};
        for (std::size_t i = 0; i < model.nets().size(); ++i) {
            const auto part = run_layer_sweep(model.nets()[i], data, options, prefixes[i], true);
            report.rows.insert(report.rows.end(), part.rows.begin(), part.rows.end());
        }
    } else {
        report = run_layer_sweep(model.nets()[0], data, options);
    }
    write_probe_csv(report, out_csv);
    std::printf("wrote %zu probe rows to %s\n", report.rows.size(), out_csv.c_str());
    return 0;
}

int cmd_count_params(const std::string& model, std::int64_t ebm_width,
                     const std::string& profile_text, int image_size, std::int64_t categories,
                     std::int64_t pose_bins, bool include_biases) {
    ModelKind kind;
    kind.family = parse_family(model);
    kind.ebm_width = ebm_width;
    const ScaleProfile profile =
        profile_text == "full" ? ScaleProfile::full_scale() : ScaleProfile::desk(8, image_size);
    const LabelSpace labels{categories, pose_bins};

    const auto specs = build_topology(kind, labels, profile);
    for (const auto& spec : specs) {
        const std::string prefix = specs.size() > 1 ? spec.kind_name + "/" : "";
        for (const auto& lc : per_layer_counts(spec)) {
            const std::int64_t n = lc.weights + (include_biases ? lc.biases : 0);
            if (n > 0) {
                std::printf("%s%-12s %lld\n", prefix.c_str(), lc.layer.c_str(),
                            static_cast<long long>(n));
            }
        }
        if (specs.size() > 1) {
            std::printf("%ssubtotal     %lld\n", prefix.c_str(),
                        static_cast<long long>(count_parameters(spec, include_biases)));
        }
    }
    std::printf("total        %lld\n",
                static_cast<long long>(count_parameters(specs, include_biases)));
    return 0;
}

std::vector<std::pair<double, double>> parse_grid(const std::string& text) {
    std::vector<std::pair<double, double>> grid;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t semi = text.find(';', pos);
        if (semi == std::string::npos) semi = text.size();
        const std::string part = text.substr(pos, semi - pos);
        const std::size_t comma = part.find(',');
        if (comma == std::string::npos) {
            throw std::invalid_argument("grid entry '" + part + "' is not 'lambda1,lambda2'");
        }
        grid.emplace_back(std::stod(part.substr(0, comma)), std::stod(part.substr(comma + 1)));
        pos = semi + 1;
    }
    if (grid.empty()) throw std::invalid_argument("empty lambda grid");
    return grid;
}

int cmd_lambda_sweep(const std::string& config_path, const std::string& out_dir,
                     std::string name, const std::string& grid_text) {
    const ExperimentConfig cfg = parse_experiment_config(config_path);
    if (name.empty()) name = family_name(cfg.kind.family) + "-sweep";
    const Dataset data = Dataset::load(cfg.dataset);
    const auto rows = lambda_sweep(cfg, parse_grid(grid_text), data, out_dir, name);
    for (const auto& r : rows) {
        std::printf("lambda=(%g, %g): category=%.2f%% aaai(argmax)=%.2f%%\n", r.lambda1,
                    r.lambda2, r.test.category_pct, r.test.aaai_argmax_pct);
    }
    std::printf("wrote %s/%s-lambda-sweep.csv\n", out_dir.c_str(), name.c_str());
    return 0;
}

int cmd_convergence_compare(const std::string& config_path, const std::string& models_text,
                            double threshold, const std::string& out_dir,
                            const std::string& name) {
    const ExperimentConfig base = parse_experiment_config(config_path);
    const Dataset data = Dataset::load(base.dataset);

    std::vector<std::pair<std::string, ExperimentConfig>> runs;
    std::size_t pos = 0;
    while (pos < models_text.size()) {
        std::size_t comma = models_text.find(',', pos);
        if (comma == std::string::npos) comma = models_text.size();
        const std::string model = models_text.substr(pos, comma - pos);
        ExperimentConfig cfg = base;
        cfg.kind.family = parse_family(model);
        runs.emplace_back(model, cfg);
        pos = comma + 1;
    }

    const ConvergenceCompare cmp = convergence_compare(runs, data, threshold, out_dir, name);
    for (std::size_t m = 0; m < cmp.names.size(); ++m) {
        if (cmp.iters_to_threshold[m] < 0) {
            std::printf("%s: val pose AAAI >= %g not reached\n", cmp.names[m].c_str(), threshold);
        } else {
            std::printf("%s: val pose AAAI >= %g at iteration %lld\n", cmp.names[m].c_str(),
                        threshold, static_cast<long long>(cmp.iters_to_threshold[m]));
        }
    }
    std::printf("wrote %s/%s-convergence-compare.csv\n", out_dir.c_str(), name.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint categorization + pose estimation laboratory"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "render a synthetic turntable dataset");
    DataConfig dcfg;
    std::string gen_out;
    std::int64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--categories", dcfg.categories, "number of categories");
    gen->add_option("--instances", dcfg.instances_per_category, "instances per category");
    gen->add_option("--views", dcfg.views_per_instance, "views per instance");
    gen->add_option("--image-size", dcfg.image_size, "stored image side");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--degenerate", dcfg.degenerate_categories,
                    "categories rendered rotation-invariant")
        ->delimiter(',');
    gen->add_flag("--sparse", dcfg.sparse_views, "8 jittered views instead of an even circle");

    // train
    auto* tr = app.add_subcommand("train", "train one model from a config file");
    std::string tr_config, tr_out = "runs", tr_name;
    tr->add_option("--config", tr_config, "experiment config file")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--name", tr_name, "run name (default: model family)");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a split");
    std::string ev_config, ev_ckpt, ev_split = "test", ev_out;
    ev->add_option("--config", ev_config, "experiment config file")->required();
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint to score")->required();
    ev->add_option("--split", ev_split, "train, val or test");
    ev->add_option("--out", ev_out, "results CSV path");

    // probe
    auto* pr = app.add_subcommand("probe", "layer-by-layer feature probes");
    std::string pr_config, pr_ckpt, pr_out;
    ProbeOptions popts;
    pr->add_option("--config", pr_config, "experiment config file")->required();
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint (omit to probe random init)");
    pr->add_option("--out", pr_out, "probe CSV path")->required();
    pr->add_option("--train-cap", popts.train_cap, "max training samples per probe");
    pr->add_option("--eval-cap", popts.eval_cap, "max val/test samples per probe");
    pr->add_option("--seed", popts.seed, "probe seed");

    // count-params
    auto* cp = app.add_subcommand("count-params", "per-layer learnable parameter counts");
    std::string cp_model = "base", cp_profile = "desk";
    std::int64_t cp_width = 0, cp_categories = 4, cp_bins = 16;
    int cp_image = 32;
    bool cp_biases = false;
    cp->add_option("--model", cp_model, "base, pm, cpm, lbm or ebm");
    cp->add_option("--ebm-width", cp_width, "pose-branch FC7 width (0 = profile default)");
    cp->add_option("--profile", cp_profile, "desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
    cp->add_option("--image-size", cp_image, "desk input side");
    cp->add_option("--categories", cp_categories, "category count");
    cp->add_option("--pose-bins", cp_bins, "pose bin count");
    cp->add_flag("--include-biases", cp_biases, "count bias terms too");

    // lambda-sweep
    auto* ls = app.add_subcommand("lambda-sweep", "train across a grid of loss weights");
    std::string ls_config, ls_out = "runs", ls_name, ls_grid = "1,1;1,2;2,1";
    ls->add_option("--config", ls_config, "experiment config file")->required();
    ls->add_option("--out", ls_out, "output directory");
    ls->add_option("--name", ls_name, "run name");
    ls->add_option("--grid", ls_grid, "semicolon-separated lambda1,lambda2 pairs");

    // convergence-compare
    auto* cc = app.add_subcommand("convergence-compare",
                                  "aligned validation curves across model kinds");
    std::string cc_config, cc_models = "pm,cpm,lbm,ebm", cc_out = "runs", cc_name = "compare";
    double cc_threshold = 0.8;
    cc->add_option("--config", cc_config, "base experiment config file")->required();
    cc->add_option("--models", cc_models, "comma-separated model families");
    cc->add_option("--threshold", cc_threshold, "validation pose AAAI threshold");
    cc->add_option("--out", cc_out, "output directory");
    cc->add_option("--name", cc_name, "run name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            dcfg.seed = static_cast<std::uint64_t>(gen_seed);
            return cmd_generate_data(dcfg, gen_out);
        }
        if (tr->parsed()) return cmd_train(tr_config, tr_out, tr_name);
        if (ev->parsed()) return cmd_evaluate(ev_config, ev_ckpt, ev_split, ev_out);
        if (pr->parsed()) return cmd_probe(pr_config, pr_ckpt, pr_out, popts);
        if (cp->parsed()) {
            return cmd_count_params(cp_model, cp_width, cp_profile, cp_image, cp_categories,
                                    cp_bins, cp_biases);
        }
        if (ls->parsed()) return cmd_lambda_sweep(ls_config, ls_out, ls_name, ls_grid);
        if (cc->parsed()) {
            return cmd_convergence_compare(cc_config, cc_models, cc_threshold, cc_out, cc_name);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
