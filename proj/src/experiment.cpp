#include "somlab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "somlab/rng.hpp"

namespace somlab {

namespace {

// Seed-stream tags for the stages of one experiment.
constexpr std::uint64_t kStreamExtractor = 0xE;
constexpr std::uint64_t kStreamRepBase = 1000;
constexpr std::uint64_t kStreamGridInit = 1;
constexpr std::uint64_t kStreamShuffle = 2;
constexpr std::uint64_t kStreamLabeling = 3;

template <typename F>
auto stage(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + name + ": " + e.what());
    }
}

std::pair<double, double> mean_stddev(const std::vector<RepetitionResult>& reps) {
    if (reps.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (const auto& r : reps) m += r.accuracy;
    m /= double(reps.size());
    if (reps.size() < 2) return {m, 0.0};
    double s2 = 0.0;
    for (const auto& r : reps) s2 += (r.accuracy - m) * (r.accuracy - m);
    return {m, std::sqrt(s2 / double(reps.size() - 1))};
}

void log_line(const std::function<void(const std::string&)>& log, const std::string& s) {
    if (log) log(s);
}

}  // namespace

std::pair<int, int> SomConfig::resolve_shape() const {
    if (width > 0 && height > 0) return {height, width};
    return squarest_factorization(neurons);
}

void ExperimentConfig::validate() const {
    if (extractor != "raw" && extractor != "scae" && extractor != "snn" &&
        extractor != "cnn")
        throw std::invalid_argument("config: unknown extractor '" + extractor + "'");
    if (repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
    som.hp.validate();
    if (!(labeling.fraction > 0.0) || labeling.fraction > 1.0)
        throw std::invalid_argument("config: labeling fraction must be in (0,1]");
    const auto [h, w] = som.resolve_shape();
    if (h * w < 1) throw std::invalid_argument("config: SOM needs at least one neuron");
}

// --- config json -----------------------------------------------------------

namespace {

void to_json(nlohmann::json& j, const nn::AdadeltaParams& p) {
    j = {{"rho", p.rho}, {"eps", p.eps}, {"lr", p.lr}};
}
void from_json(const nlohmann::json& j, nn::AdadeltaParams& p) {
    p.rho = j.value("rho", p.rho);
    p.eps = j.value("eps", p.eps);
    p.lr = j.value("lr", p.lr);
}

void to_json(nlohmann::json& j, const GradientNetConfig& c) {
    nlohmann::json opt;
    to_json(opt, c.opt);
    j = {{"maps", c.maps},         {"epochs", c.epochs},
         {"batch", c.batch},       {"lambda_w", c.lambda_w},
         {"lambda_a", c.lambda_a}, {"adadelta", opt}};
}
void from_json(const nlohmann::json& j, GradientNetConfig& c) {
    c.maps = j.value("maps", c.maps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lambda_w = j.value("lambda_w", c.lambda_w);
    c.lambda_a = j.value("lambda_a", c.lambda_a);
    if (j.contains("adadelta")) from_json(j.at("adadelta"), c.opt);
}

void to_json(nlohmann::json& j, const snn::SnnConfig& c) {
    j = {{"maps", c.maps},
         {"t_bins", c.t_bins},
         {"dog_size", c.dog_size},
         {"dog_sigma_on", c.dog_sigma_on},
         {"dog_sigma_off", c.dog_sigma_off},
         {"dog_threshold", c.dog_threshold},
         {"conv1_threshold", c.conv1_threshold},
         {"conv2_train_threshold", c.conv2_train_threshold},
         {"a_plus", c.a_plus},
         {"a_minus", c.a_minus},
         {"kwta", c.kwta},
         {"inhibition_radius", c.inhibition_radius},
         {"w_init_mean", c.w_init_mean},
         {"w_init_std", c.w_init_std},
         {"convergence_threshold", c.convergence_threshold},
         {"max_passes", c.max_passes},
         {"lr_doubling_interval", c.lr_doubling_interval},
         {"lr_max_a_plus", c.lr_max_a_plus}};
}
void from_json(const nlohmann::json& j, snn::SnnConfig& c) {
    c.maps = j.value("maps", c.maps);
    c.t_bins = j.value("t_bins", c.t_bins);
    c.dog_size = j.value("dog_size", c.dog_size);
    c.dog_sigma_on = j.value("dog_sigma_on", c.dog_sigma_on);
    c.dog_sigma_off = j.value("dog_sigma_off", c.dog_sigma_off);
    c.dog_threshold = j.value("dog_threshold", c.dog_threshold);
    c.conv1_threshold = j.value("conv1_threshold", c.conv1_threshold);
    c.conv2_train_threshold = j.value("conv2_train_threshold", c.conv2_train_threshold);
    c.a_plus = j.value("a_plus", c.a_plus);
    c.a_minus = j.value("a_minus", c.a_minus);
    c.kwta = j.value("kwta", c.kwta);
    c.inhibition_radius = j.value("inhibition_radius", c.inhibition_radius);
    c.w_init_mean = j.value("w_init_mean", c.w_init_mean);
    c.w_init_std = j.value("w_init_std", c.w_init_std);
    c.convergence_threshold = j.value("convergence_threshold", c.convergence_threshold);
    c.max_passes = j.value("max_passes", c.max_passes);
    c.lr_doubling_interval = j.value("lr_doubling_interval", c.lr_doubling_interval);
    c.lr_max_a_plus = j.value("lr_max_a_plus", c.lr_max_a_plus);
}

}  // namespace

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    nlohmann::json scae_j, cnn_j, snn_j;
    to_json(scae_j, c.scae);
    to_json(cnn_j, c.cnn);
    to_json(snn_j, c.snn);
    j = nlohmann::json{
        {"schema_version", 1},
        {"extractor", c.extractor},
        {"seed", c.seed},
        {"repetitions", c.repetitions},
        {"out_dir", c.out_dir},
        {"data",
         {{"mnist_dir", c.data.mnist_dir},
          {"train_subset", c.data.train_subset},
          {"subset_seed", c.data.subset_seed}}},
        {"som",
         {{"neurons", c.som.neurons},
          {"width", c.som.width},
          {"height", c.som.height},
          {"eps_i", c.som.hp.eps_i},
          {"eps_f", c.som.hp.eps_f},
          {"sigma_i", c.som.hp.sigma_i},
          {"sigma_f", c.som.hp.sigma_f},
          {"alpha", c.som.hp.alpha},
          {"epochs", c.som.hp.epochs},
          {"normalize_features", c.som.normalize_features}}},
        {"labeling",
         {{"fraction", c.labeling.fraction},
          {"alpha", c.labeling.alpha},
          {"stratified", c.labeling.stratified}}},
        {"scae", scae_j},
        {"cnn", cnn_j},
        {"snn", snn_j}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.extractor = j.value("extractor", c.extractor);
    c.seed = j.value("seed", c.seed);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        c.data.mnist_dir = d.value("mnist_dir", c.data.mnist_dir);
        c.data.train_subset = d.value("train_subset", c.data.train_subset);
        c.data.subset_seed = d.value("subset_seed", c.data.subset_seed);
    }
    if (j.contains("som")) {
        const auto& s = j.at("som");
        c.som.neurons = s.value("neurons", c.som.neurons);
        c.som.width = s.value("width", c.som.width);
        c.som.height = s.value("height", c.som.height);
        c.som.hp.eps_i = s.value("eps_i", c.som.hp.eps_i);
        c.som.hp.eps_f = s.value("eps_f", c.som.hp.eps_f);
        c.som.hp.sigma_i = s.value("sigma_i", c.som.hp.sigma_i);
        c.som.hp.sigma_f = s.value("sigma_f", c.som.hp.sigma_f);
        c.som.hp.alpha = s.value("alpha", c.som.hp.alpha);
        c.som.hp.epochs = s.value("epochs", c.som.hp.epochs);
        c.som.normalize_features = s.value("normalize_features", c.som.normalize_features);
    }
    if (j.contains("labeling")) {
        const auto& l = j.at("labeling");
        c.labeling.fraction = l.value("fraction", c.labeling.fraction);
        c.labeling.alpha = l.value("alpha", c.labeling.alpha);
        c.labeling.stratified = l.value("stratified", c.labeling.stratified);
    }
    if (j.contains("scae")) from_json(j.at("scae"), c.scae);
    if (j.contains("cnn")) from_json(j.at("cnn"), c.cnn);
    if (j.contains("snn")) from_json(j.at("snn"), c.snn);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path.string());
    nlohmann::json j;
    f >> j;
    ExperimentConfig c;
    from_json(j, c);
    return c;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
    nlohmann::json j;
    to_json(j, c);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path.string());
    f << j.dump(2) << "\n";
}

// --- report ----------------------------------------------------------------

nlohmann::json report_to_json(const ExperimentReport& r) {
    nlohmann::json cfg;
    to_json(cfg, r.config);
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.repetitions)
        reps.push_back({{"seed", rep.seed}, {"accuracy", rep.accuracy}});
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [k, v] : r.artifacts) artifacts[k] = v;
    return nlohmann::json{{"schema_version", r.schema_version},
                          {"config", cfg},
                          {"repetitions", reps},
                          {"mean", r.mean},
                          {"stddev", r.stddev},
                          {"wall_clock_sec", r.wall_clock_sec},
                          {"artifacts", artifacts}};
}

void save_report(const std::filesystem::path& path, const ExperimentReport& r) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("report: cannot open " + path.string());
    f << report_to_json(r).dump(2) << "\n";
}

std::string canonical_results(const ExperimentReport& r) {
    nlohmann::json j = report_to_json(r);
    j.erase("wall_clock_sec");
    j.erase("artifacts");
    j["config"].erase("out_dir");
    return j.dump();
}

// --- feature extraction ----------------------------------------------------

ExtractedFeatures extract_for_config(const ExperimentConfig& cfg,
                                     const std::function<void(const std::string&)>& log) {
    cfg.validate();
    LabeledDataset train = stage("mnist_io", [&] {
        return load_mnist_split(cfg.data.mnist_dir, LabeledDataset::Split::train);
    });
    LabeledDataset test = stage("mnist_io", [&] {
        return load_mnist_split(cfg.data.mnist_dir, LabeledDataset::Split::test);
    });
    if (cfg.data.train_subset > 0 && cfg.data.train_subset < train.count) {
        SubsetSpec spec;
        spec.fraction = double(cfg.data.train_subset) / double(train.count);
        spec.seed = cfg.data.subset_seed;
        train = take_subset(train, subset_indices(train.count, spec, train.labels));
    }
    log_line(log, "data: " + std::to_string(train.count) + " train / " +
                      std::to_string(test.count) + " test images");

    Tensor train_imgs({train.count, train.image_size()});
    train_imgs.data = train.pixels;
    Tensor test_imgs({test.count, test.image_size()});
    test_imgs.data = test.pixels;

    ExtractedFeatures out;
    out.train_labels = train.labels;
    out.test_labels = test.labels;
    const std::uint64_t ex_seed = derive_seed(cfg.seed, kStreamExtractor);

    if (cfg.extractor == "raw") {
        out.train.features = std::move(train_imgs);
        out.test.features = std::move(test_imgs);
        out.train.topology = "28x28";
    } else if (cfg.extractor == "scae") {
        ScaeModel model = make_scae(cfg.scae.maps, ex_seed, cfg.scae.lambda_w,
                                    cfg.scae.lambda_a);
        stage("extractor_train", [&] {
            train_scae(model, train_imgs, cfg.scae.epochs, cfg.scae.batch,
                       derive_seed(ex_seed, 1), cfg.scae.opt,
                       [&](int e, double loss) {
                           log_line(log, "scae epoch " + std::to_string(e) +
                                             " loss " + std::to_string(loss));
                       });
            return 0;
        });
        out.train.features = stage("extract", [&] { return scae_extract(model, train_imgs); });
        out.test.features = stage("extract", [&] { return scae_extract(model, test_imgs); });
        out.train.topology = model.topology();
    } else if (cfg.extractor == "cnn") {
        CnnBaselineModel model = make_cnn_baseline(cfg.cnn.maps, ex_seed);
        stage("extractor_train", [&] {
            train_cnn_baseline(model, train_imgs, train.labels, cfg.cnn.epochs,
                               cfg.cnn.batch, derive_seed(ex_seed, 1), cfg.cnn.opt,
                               [&](int e, double loss) {
                                   log_line(log, "cnn epoch " + std::to_string(e) +
                                                     " loss " + std::to_string(loss));
                               });
            return 0;
        });
        out.train.features = stage("extract", [&] { return cnn_extract(model, train_imgs); });
        out.test.features = stage("extract", [&] { return cnn_extract(model, test_imgs); });
        out.train.topology = model.topology();
    } else {  // snn
        snn::SnnConfig scfg = cfg.snn;
        snn::SnnNetwork net = snn::make_snn(scfg, ex_seed);
        stage("extractor_train", [&] {
            const auto st = snn::train_layerwise(net, train_imgs, derive_seed(ex_seed, 1));
            log_line(log, "snn conv1: " + std::to_string(st.conv1.passes) + " passes, metric " +
                              std::to_string(st.conv1.metric_per_pass.empty()
                                                 ? 0.0
                                                 : st.conv1.metric_per_pass.back()));
            log_line(log, "snn conv2: " + std::to_string(st.conv2.passes) + " passes, metric " +
                              std::to_string(st.conv2.metric_per_pass.empty()
                                                 ? 0.0
                                                 : st.conv2.metric_per_pass.back()));
            return 0;
        });
        out.train.features = stage("extract", [&] { return extract_features_all(net, train_imgs); });
        out.test.features = stage("extract", [&] { return extract_features_all(net, test_imgs); });
        out.train.topology = net.topology();
    }
    out.train.extractor = cfg.extractor;
    out.train.seed = ex_seed;
    out.test.extractor = cfg.extractor;
    out.test.topology = out.train.topology;
    out.test.seed = ex_seed;
    return out;
}

// --- run -------------------------------------------------------------------

namespace {

// Min-max ranges fitted on train, applied to both matrices.
void normalize_pair(Tensor& train, Tensor& test) {
    const int d = train.dim(1);
    std::vector<float> lo(d, std::numeric_limits<float>::infinity());
    std::vector<float> hi(d, -std::numeric_limits<float>::infinity());
    for (int i = 0; i < train.dim(0); ++i) {
        const float* r = train.ptr() + std::size_t(i) * d;
        for (int j = 0; j < d; ++j) {
            lo[j] = std::min(lo[j], r[j]);
            hi[j] = std::max(hi[j], r[j]);
        }
    }
    const auto apply = [&](Tensor& m) {
        for (int i = 0; i < m.dim(0); ++i) {
            float* r = m.ptr() + std::size_t(i) * d;
            for (int j = 0; j < d; ++j) {
                const float range = hi[j] - lo[j];
                r[j] = range > 0.f ? (r[j] - lo[j]) / range : 0.f;
            }
        }
    };
    apply(train);
    apply(test);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();

    ExperimentReport report;
    report.config = cfg;

    Tensor train_f, test_f;
    std::vector<std::uint8_t> train_labels, test_labels;
    std::string topology;

    if (opt.train_features && opt.test_features) {
        train_f = opt.train_features->features;
        test_f = opt.test_features->features;
        topology = opt.train_features->topology;
        // Labels still come from the dataset files.
        LabeledDataset train = stage("mnist_io", [&] {
            return load_mnist_split(cfg.data.mnist_dir, LabeledDataset::Split::train);
        });
        LabeledDataset test = stage("mnist_io", [&] {
            return load_mnist_split(cfg.data.mnist_dir, LabeledDataset::Split::test);
        });
        if (cfg.data.train_subset > 0 && cfg.data.train_subset < train.count) {
            SubsetSpec spec;
            spec.fraction = double(cfg.data.train_subset) / double(train.count);
            spec.seed = cfg.data.subset_seed;
            train = take_subset(train, subset_indices(train.count, spec, train.labels));
        }
        if (train.count != train_f.dim(0) || test.count != test_f.dim(0))
            throw std::runtime_error(
                "stage features: cached dump row count does not match the dataset");
        train_labels = train.labels;
        test_labels = test.labels;
    } else {
        ExtractedFeatures ex = extract_for_config(cfg, opt.log);
        train_f = std::move(ex.train.features);
        test_f = std::move(ex.test.features);
        train_labels = std::move(ex.train_labels);
        test_labels = std::move(ex.test_labels);
        topology = ex.train.topology;
    }

    if (cfg.som.normalize_features) normalize_pair(train_f, test_f);

    const auto [grid_h, grid_w] = cfg.som.resolve_shape();
    const int dim = train_f.dim(1);

    const bool writing = opt.save_artifacts && !cfg.out_dir.empty();
    if (writing) std::filesystem::create_directories(cfg.out_dir);

    for (int r = 0; r < cfg.repetitions; ++r) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, kStreamRepBase + r);
        SomGrid grid = make_grid(grid_w, grid_h, dim, derive_seed(rep_seed, kStreamGridInit));
        stage("som_train", [&] {
            train(grid, train_f, cfg.som.hp, derive_seed(rep_seed, kStreamShuffle));
            return 0;
        });
        SubsetSpec lspec;
        lspec.fraction = cfg.labeling.fraction;
        lspec.seed = derive_seed(rep_seed, kStreamLabeling);
        lspec.stratified = cfg.labeling.stratified;
        const auto subset = stage("labeling", [&] {
            return subset_indices(train_f.dim(0), lspec, train_labels);
        });
        const NeuronLabels labels = stage("labeling", [&] {
            return label_from_subset(grid, train_f, train_labels, subset,
                                     cfg.labeling.alpha);
        });
        const double acc = stage("evaluate", [&] {
            return evaluate(grid, labels, test_f, test_labels);
        });
        report.repetitions.push_back({rep_seed, acc});
        log_line(opt.log, "rep " + std::to_string(r) + ": accuracy " + std::to_string(acc));

        if (writing && r == 0) {
            const auto grid_path = std::filesystem::path(cfg.out_dir) / "grid_rep0.som";
            const auto labels_path =
                std::filesystem::path(cfg.out_dir) / "labels_rep0.json";
            save_grid(grid_path, grid, cfg.som.hp);
            save_labels(labels_path, labels);
            report.artifacts.push_back({"grid_rep0", grid_path.string()});
            report.artifacts.push_back({"labels_rep0", labels_path.string()});
        }
    }

    std::tie(report.mean, report.stddev) = mean_stddev(report.repetitions);
    report.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (writing) {
        if (opt.save_feature_dumps) {
            FeatureDump tr{cfg.extractor, topology, cfg.seed, std::move(train_f)};
            FeatureDump te{cfg.extractor, topology, cfg.seed, std::move(test_f)};
            const auto trp = std::filesystem::path(cfg.out_dir) / "features_train.fdump";
            const auto tep = std::filesystem::path(cfg.out_dir) / "features_test.fdump";
            save_features(trp, tr);
            save_features(tep, te);
            report.artifacts.push_back({"features_train", trp.string()});
            report.artifacts.push_back({"features_test", tep.string()});
        }
        const auto rp = std::filesystem::path(cfg.out_dir) / "report.json";
        save_report(rp, report);
        report.artifacts.push_back({"report", rp.string()});
    }
    return report;
}

// --- sweeps ------------------------------------------------------------------

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "feature_maps") return SweepAxis::feature_maps;
    if (s == "som_neurons") return SweepAxis::som_neurons;
    if (s == "label_fraction") return SweepAxis::label_fraction;
    throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::feature_maps: return "feature_maps";
        case SweepAxis::som_neurons: return "som_neurons";
        case SweepAxis::label_fraction: return "label_fraction";
    }
    return "?";
}

SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                      const std::vector<double>& values, const RunOptions& opt) {
    SweepResult res;
    res.axis = axis;
    for (const double v : values) {
        SweepPoint point;
        point.axis_value = v;
        ExperimentConfig cfg = base;
        try {
            switch (axis) {
                case SweepAxis::feature_maps: {
                    const int maps = static_cast<int>(v);
                    if (cfg.extractor == "raw")
                        throw std::invalid_argument(
                            "feature_maps sweep needs a trained extractor");
                    cfg.scae.maps = maps;
                    cfg.cnn.maps = maps;
                    cfg.snn.maps = maps;
                    break;
                }
                case SweepAxis::som_neurons:
                    cfg.som.neurons = static_cast<int>(v);
                    cfg.som.width = cfg.som.height = 0;
                    break;
                case SweepAxis::label_fraction:
                    cfg.labeling.fraction = v;
                    break;
            }
            if (!cfg.out_dir.empty())
                cfg.out_dir += "/point_" + to_string(axis) + "_" + std::to_string(v);
            point.report = run_experiment(cfg, opt);
            point.ok = true;
        } catch (const std::exception& e) {
            point.ok = false;
            point.error = e.what();
        }
        res.points.push_back(std::move(point));
    }
    return res;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("sweep csv: cannot open " + path.string());
    f << "axis,value,mean_accuracy,stddev_accuracy,repetitions\n";
    for (const auto& p : sweep.points) {
        if (!p.ok) continue;
        f << to_string(sweep.axis) << "," << p.axis_value << "," << p.report.mean << ","
          << p.report.stddev << "," << p.report.repetitions.size() << "\n";
    }
}

nlohmann::json sweep_to_json(const SweepResult& sweep) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : sweep.points) {
        nlohmann::json e;
        e["axis_value"] = p.axis_value;
        e["ok"] = p.ok;
        if (p.ok)
            e["report"] = report_to_json(p.report);
        else
            e["error"] = p.error;
        pts.push_back(std::move(e));
    }
    return nlohmann::json{{"schema_version", 1},
                          {"axis", to_string(sweep.axis)},
                          {"points", pts}};
}

// --- grid search -------------------------------------------------------------

void from_json(const nlohmann::json& j, SomHpGrid& g) {
    if (j.contains("eps_i")) g.eps_i = j.at("eps_i").get<std::vector<double>>();
    if (j.contains("eps_f")) g.eps_f = j.at("eps_f").get<std::vector<double>>();
    if (j.contains("sigma_i")) g.sigma_i = j.at("sigma_i").get<std::vector<double>>();
    if (j.contains("sigma_f")) g.sigma_f = j.at("sigma_f").get<std::vector<double>>();
    if (j.contains("alpha")) g.alpha = j.at("alpha").get<std::vector<double>>();
    if (j.contains("epochs")) g.epochs = j.at("epochs").get<std::vector<int>>();
}

GridSearchResult grid_search_som(const ExperimentConfig& base, const SomHpGrid& grid,
                                 double holdout_fraction,
                                 const std::function<void(const std::string&)>& log) {
    if (grid.cardinality() == 0)
        throw std::invalid_argument("grid search: empty hyper-parameter grid");
    if (!(holdout_fraction > 0.0) || holdout_fraction >= 1.0)
        throw std::invalid_argument("grid search: holdout fraction must be in (0,1)");

    ExtractedFeatures ex = extract_for_config(base, log);
    const Tensor& all = ex.train.features;
    const int n = all.dim(0), d = all.dim(1);
    const int n_holdout = std::max(1, static_cast<int>(std::lround(holdout_fraction * n)));
    const int n_fit = n - n_holdout;
    if (n_fit < 1) throw std::invalid_argument("grid search: holdout leaves no data");

    // Seeded permutation decides the fit/holdout split.
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(base.seed, 0x6F1D));
    rng.shuffle(perm);

    Tensor fit({n_fit, d}), hold({n_holdout, d});
    std::vector<std::uint8_t> fit_labels(n_fit), hold_labels(n_holdout);
    for (int i = 0; i < n_fit; ++i) {
        const auto r = all.row(perm[i]);
        std::copy(r.begin(), r.end(), fit.data.begin() + std::size_t(i) * d);
        fit_labels[i] = ex.train_labels[perm[i]];
    }
    for (int i = 0; i < n_holdout; ++i) {
        const auto r = all.row(perm[n_fit + i]);
        std::copy(r.begin(), r.end(), hold.data.begin() + std::size_t(i) * d);
        hold_labels[i] = ex.train_labels[perm[n_fit + i]];
    }

    const auto [grid_h, grid_w] = base.som.resolve_shape();
    GridSearchResult res;
    res.best_accuracy = -1.0;

    for (const double ei : grid.eps_i)
        for (const double ef : grid.eps_f)
            for (const double si : grid.sigma_i)
                for (const double sf : grid.sigma_f)
                    for (const double al : grid.alpha)
                        for (const int ep : grid.epochs) {
                            SomHyperParams hp;
                            hp.eps_i = ei;
                            hp.eps_f = ef;
                            hp.sigma_i = si;
                            hp.sigma_f = sf;
                            hp.alpha = al;
                            hp.epochs = ep;
                            hp.validate();

                            const std::uint64_t rep_seed =
                                derive_seed(base.seed, kStreamRepBase);
                            SomGrid g = make_grid(grid_w, grid_h, d,
                                                  derive_seed(rep_seed, kStreamGridInit));
                            train(g, fit, hp, derive_seed(rep_seed, kStreamShuffle));
                            SubsetSpec lspec;
                            lspec.fraction = base.labeling.fraction;
                            lspec.seed = derive_seed(rep_seed, kStreamLabeling);
                            lspec.stratified = base.labeling.stratified;
                            const auto subset = subset_indices(n_fit, lspec, fit_labels);
                            const NeuronLabels labels = label_from_subset(
                                g, fit, fit_labels, subset, hp.alpha);
                            const double acc = evaluate(g, labels, hold, hold_labels);
                            res.table.push_back({hp, acc});
                            if (acc > res.best_accuracy) {
                                res.best_accuracy = acc;
                                res.best = hp;
                            }
                            log_line(log, "grid point eps(" + std::to_string(ei) + "," +
                                              std::to_string(ef) + ") sigma(" +
                                              std::to_string(si) + "," + std::to_string(sf) +
                                              ") alpha " + std::to_string(al) + " epochs " +
                                              std::to_string(ep) + " -> " +
                                              std::to_string(acc));
                        }
    return res;
}

void write_grid_csv(const std::filesystem::path& path, const GridSearchResult& res) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("grid csv: cannot open " + path.string());
    f << "eps_i,eps_f,sigma_i,sigma_f,alpha,epochs,accuracy\n";
    for (const auto& row : res.table)
        f << row.hp.eps_i << "," << row.hp.eps_f << "," << row.hp.sigma_i << ","
          << row.hp.sigma_f << "," << row.hp.alpha << "," << row.hp.epochs << ","
          << row.accuracy << "\n";
}

// --- presets -----------------------------------------------------------------

std::vector<std::string> preset_names() {
    return {"raw-ci",    "raw-reference", "scae-desk", "cae-desk", "scae-full",
            "cae-full",  "snn-desk",      "snn-full",  "cnn-desk", "cnn-full"};
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;  // defaults: raw, 256 neurons, 1% labels, 10 reps
    if (name == "raw-ci") {
        c.data.train_subset = 2000;
        c.som.neurons = 64;
        c.som.hp.epochs = 3;
        c.labeling.fraction = 0.1;
        c.repetitions = 2;
    } else if (name == "raw-reference") {
        // full training set, 256 neurons, 1% labels
    } else if (name == "scae-desk" || name == "cae-desk") {
        c.extractor = "scae";
        c.scae.maps = 32;
        c.scae.epochs = 10;
        c.data.train_subset = 10000;
        c.labeling.fraction = 0.1;
        c.repetitions = 3;
        if (name == "cae-desk") c.scae.lambda_w = c.scae.lambda_a = 0.f;
    } else if (name == "scae-full" || name == "cae-full") {
        c.extractor = "scae";
        c.scae.maps = 256;
        c.scae.epochs = 100;
        c.labeling.fraction = 0.01;
        if (name == "cae-full") c.scae.lambda_w = c.scae.lambda_a = 0.f;
    } else if (name == "snn-desk") {
        c.extractor = "snn";
        c.snn.maps = 64;
        c.snn.lr_doubling_interval = 500;
        c.data.train_subset = 10000;
        c.labeling.fraction = 0.1;
        c.repetitions = 3;
    } else if (name == "snn-full") {
        c.extractor = "snn";
        c.snn.maps = 64;
        c.snn.lr_doubling_interval = 500;
        c.labeling.fraction = 0.01;
    } else if (name == "cnn-desk") {
        c.extractor = "cnn";
        c.cnn.maps = 8;
        c.cnn.epochs = 10;
        c.data.train_subset = 1000;
        c.labeling.fraction = 0.1;
        c.repetitions = 3;
    } else if (name == "cnn-full") {
        c.extractor = "cnn";
        c.cnn.maps = 256;
        c.cnn.epochs = 100;
        c.labeling.fraction = 0.01;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return c;
}

}  // namespace somlab
