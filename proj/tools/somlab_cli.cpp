// Command-line front end: run single experiments, sweeps and grid searches,
// re-label or re-evaluate saved grids, and dump feature matrices.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "somlab/experiment.hpp"
#include "somlab/feature_dump.hpp"
#include "somlab/labeling.hpp"
#include "somlab/mnist_io.hpp"
#include "somlab/rng.hpp"
#include "somlab/som.hpp"

namespace {

using namespace somlab;

struct ConfigArgs {
    std::string config_path;
    std::string preset_name;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::string out;
    std::string mnist_dir;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON experiment config");
        cmd->add_option("--preset", preset_name, "named built-in config");
        cmd->add_option("--seed", seed, "master seed override");
        cmd->add_option("--reps", reps, "repetition count override");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--mnist-dir", mnist_dir, "MNIST IDX directory override");
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg;
        if (!config_path.empty() && !preset_name.empty())
            throw CLI::ValidationError("--config and --preset are exclusive");
        if (!config_path.empty())
            cfg = load_config(config_path);
        else if (!preset_name.empty())
            cfg = preset(preset_name);
        if (seed) cfg.seed = *seed;
        if (reps) cfg.repetitions = *reps;
        if (!out.empty()) cfg.out_dir = out;
        if (!mnist_dir.empty()) cfg.data.mnist_dir = mnist_dir;
        return cfg;
    }
};

void print_report(const ExperimentReport& r) {
    std::printf("extractor=%s neurons=%d labels=%.4g%% reps=%zu\n",
                r.config.extractor.c_str(), r.config.som.neurons,
                100.0 * r.config.labeling.fraction, r.repetitions.size());
    for (std::size_t i = 0; i < r.repetitions.size(); ++i)
        std::printf("  rep %zu: accuracy %.4f (seed %llu)\n", i,
                    r.repetitions[i].accuracy,
                    static_cast<unsigned long long>(r.repetitions[i].seed));
    std::printf("accuracy: %.4f +/- %.4f (wall %.1fs)\n", r.mean, r.stddev,
                r.wall_clock_sec);
}

RunOptions verbose_options(bool verbose) {
    RunOptions opt;
    if (verbose)
        opt.log = [](const std::string& s) { std::cerr << "[somlab] " << s << "\n"; };
    return opt;
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"somlab: SOM-based unsupervised MNIST classification lab"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "progress on stderr");

    // run
    auto* run_cmd = app.add_subcommand("run", "run one experiment end to end");
    ConfigArgs run_args;
    run_args.attach(run_cmd);
    std::string feat_train_path, feat_test_path;
    bool save_feats = false;
    run_cmd->add_option("--features-train", feat_train_path,
                        "cached train feature dump (skips extractor training)");
    run_cmd->add_option("--features-test", feat_test_path, "cached test feature dump");
    run_cmd->add_flag("--save-features", save_feats, "write feature dumps to --out");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
    ConfigArgs sweep_args;
    sweep_args.attach(sweep_cmd);
    std::string axis_str = "som_neurons", values_csv;
    sweep_cmd->add_option("--axis", axis_str,
                          "feature_maps | som_neurons | label_fraction");
    sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")
        ->required();

    // grid-search
    auto* grid_cmd = app.add_subcommand("grid-search", "SOM hyper-parameter grid search");
    ConfigArgs grid_args;
    grid_args.attach(grid_cmd);
    std::string grid_path;
    double holdout = 0.1;
    grid_cmd->add_option("--grid", grid_path, "JSON with hyper-parameter value lists");
    grid_cmd->add_option("--holdout", holdout, "held-out fraction of the training set");

    // label
    auto* label_cmd =
        app.add_subcommand("label", "re-label a saved grid from a fresh subset");
    std::string l_grid, l_feats, l_mnist = "data/mnist", l_out = "labels.json";
    double l_fraction = 0.01, l_alpha = 1.0;
    std::uint64_t l_seed = 42;
    label_cmd->add_option("--grid", l_grid, "SOM checkpoint")->required();
    label_cmd->add_option("--features", l_feats, "train feature dump")->required();
    label_cmd->add_option("--mnist-dir", l_mnist, "MNIST IDX directory (labels)");
    label_cmd->add_option("--fraction", l_fraction, "labeled fraction");
    label_cmd->add_option("--alpha", l_alpha, "activity width");
    label_cmd->add_option("--seed", l_seed, "subset seed");
    label_cmd->add_option("--out", l_out, "label table path");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved grid + label table");
    std::string e_grid, e_labels, e_feats, e_mnist = "data/mnist";
    eval_cmd->add_option("--grid", e_grid, "SOM checkpoint")->required();
    eval_cmd->add_option("--labels", e_labels, "label table")->required();
    eval_cmd->add_option("--features", e_feats, "test feature dump")->required();
    eval_cmd->add_option("--mnist-dir", e_mnist, "MNIST IDX directory (labels)");

    // dump-features
    auto* dump_cmd = app.add_subcommand("dump-features", "train extractor, dump features");
    ConfigArgs dump_args;
    dump_args.attach(dump_cmd);

    // preset
    auto* preset_cmd = app.add_subcommand("preset", "list or show built-in presets");
    std::string preset_show;
    bool preset_list = false;
    preset_cmd->add_flag("--list", preset_list, "list preset names");
    preset_cmd->add_option("--show", preset_show, "print one preset as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            ExperimentConfig cfg = run_args.resolve();
            RunOptions opt = verbose_options(verbose);
            opt.save_feature_dumps = save_feats;
            FeatureDump ftr, fte;
            if (!feat_train_path.empty() && !feat_test_path.empty()) {
                ftr = load_features(feat_train_path);
                fte = load_features(feat_test_path);
                opt.train_features = &ftr;
                opt.test_features = &fte;
            } else if (!feat_train_path.empty() || !feat_test_path.empty()) {
                throw CLI::ValidationError(
                    "--features-train and --features-test go together");
            }
            print_report(run_experiment(cfg, opt));
        } else if (sweep_cmd->parsed()) {
            ExperimentConfig cfg = sweep_args.resolve();
            const auto values = parse_values(values_csv);
            const SweepAxis axis = sweep_axis_from_string(axis_str);
            if (values.empty()) {
                std::cerr << "warning: empty sweep value list, nothing to do\n";
                return 0;
            }
            const SweepResult res = run_sweep(cfg, axis, values, verbose_options(verbose));
            for (const auto& p : res.points) {
                if (p.ok)
                    std::printf("%s=%g: %.4f +/- %.4f\n", to_string(axis).c_str(),
                                p.axis_value, p.report.mean, p.report.stddev);
                else
                    std::printf("%s=%g: FAILED (%s)\n", to_string(axis).c_str(),
                                p.axis_value, p.error.c_str());
            }
            if (!cfg.out_dir.empty()) {
                std::filesystem::create_directories(cfg.out_dir);
                write_sweep_csv(std::filesystem::path(cfg.out_dir) / "sweep.csv", res);
                std::ofstream jf(std::filesystem::path(cfg.out_dir) / "sweep.json");
                jf << sweep_to_json(res).dump(2) << "\n";
            }
        } else if (grid_cmd->parsed()) {
            ExperimentConfig cfg = grid_args.resolve();
            SomHpGrid grid;
            if (!grid_path.empty()) {
                std::ifstream gf(grid_path);
                if (!gf) throw std::runtime_error("cannot open " + grid_path);
                nlohmann::json j;
                gf >> j;
                from_json(j, grid);
            }
            const auto res = grid_search_som(cfg, grid, holdout,
                                             verbose_options(verbose).log);
            std::printf("best: eps(%g,%g) sigma(%g,%g) alpha %g epochs %d -> %.4f\n",
                        res.best.eps_i, res.best.eps_f, res.best.sigma_i,
                        res.best.sigma_f, res.best.alpha, res.best.epochs,
                        res.best_accuracy);
            if (!cfg.out_dir.empty()) {
                std::filesystem::create_directories(cfg.out_dir);
                write_grid_csv(std::filesystem::path(cfg.out_dir) / "grid.csv", res);
            }
        } else if (label_cmd->parsed()) {
            const SomGrid grid = load_grid(l_grid);
            const FeatureDump feats = load_features(l_feats);
            const auto train =
                load_mnist_split(l_mnist, LabeledDataset::Split::train);
            if (feats.features.dim(0) != train.count)
                throw std::runtime_error(
                    "feature dump rows do not match the training set; re-label "
                    "needs full-train features");
            SubsetSpec spec;
            spec.fraction = l_fraction;
            spec.seed = l_seed;
            const auto subset =
                subset_indices(feats.features.dim(0), spec, train.labels);
            const NeuronLabels labels = label_from_subset(
                grid, feats.features, train.labels, subset, l_alpha);
            save_labels(l_out, labels);
            std::printf("labeled %d/%d neurons from %zu samples -> %s\n",
                        labels.labeled_count(), grid.neurons(), subset.size(),
                        l_out.c_str());
        } else if (eval_cmd->parsed()) {
            const SomGrid grid = load_grid(e_grid);
            const NeuronLabels labels = load_labels(e_labels);
            const FeatureDump feats = load_features(e_feats);
            const auto test = load_mnist_split(e_mnist, LabeledDataset::Split::test);
            if (feats.features.dim(0) != test.count)
                throw std::runtime_error("feature dump rows do not match the test set");
            const double acc = evaluate(grid, labels, feats.features, test.labels);
            std::printf("accuracy: %.4f\n", acc);
        } else if (dump_cmd->parsed()) {
            ExperimentConfig cfg = dump_args.resolve();
            if (cfg.out_dir.empty())
                throw CLI::ValidationError("dump-features requires --out");
            std::filesystem::create_directories(cfg.out_dir);
            ExtractedFeatures ex =
                extract_for_config(cfg, verbose_options(verbose).log);
            const auto trp =
                std::filesystem::path(cfg.out_dir) / "features_train.fdump";
            const auto tep = std::filesystem::path(cfg.out_dir) / "features_test.fdump";
            save_features(trp, ex.train);
            save_features(tep, ex.test);
            std::printf("wrote %s (%dx%d) and %s (%dx%d)\n", trp.c_str(),
                        ex.train.features.dim(0), ex.train.features.dim(1),
                        tep.c_str(), ex.test.features.dim(0), ex.test.features.dim(1));
        } else if (preset_cmd->parsed()) {
            if (preset_list || preset_show.empty()) {
                for (const auto& n : preset_names()) std::printf("%s\n", n.c_str());
            }
            if (!preset_show.empty()) {
                nlohmann::json j;
                to_json(j, preset(preset_show));
                std::printf("%s\n", j.dump(2).c_str());
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
