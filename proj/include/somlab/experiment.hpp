#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "somlab/feature_dump.hpp"
#include "somlab/labeling.hpp"
#include "somlab/mnist_io.hpp"
#include "somlab/nn/adadelta.hpp"
#include "somlab/scae.hpp"
#include "somlab/snn.hpp"
#include "somlab/som.hpp"

namespace somlab {

struct DataConfig {
    std::string mnist_dir = "data/mnist";
    int train_subset = 0;          // 0 = full training set
    std::uint64_t subset_seed = 1; // independent of the master seed so cached
                                   // feature dumps survive seed changes
};

struct SomConfig {
    int neurons = 256;
    int width = 0, height = 0;     // 0 = squarest factorization of `neurons`
    SomHyperParams hp;
    bool normalize_features = false;  // min-max scaling fitted on train

    std::pair<int, int> resolve_shape() const;
};

struct LabelingConfig {
    double fraction = 0.01;
    double alpha = 1.0;
    bool stratified = false;
};

struct GradientNetConfig {
    int maps = 256;
    int epochs = 100;
    int batch = 64;
    float lambda_w = 1e-4f;  // ignored by the CNN baseline
    float lambda_a = 1e-4f;
    nn::AdadeltaParams opt;
};

struct ExperimentConfig {
    std::string extractor = "raw";  // raw | scae | snn | cnn
    std::uint64_t seed = 42;
    int repetitions = 10;
    std::string out_dir;

    DataConfig data;
    SomConfig som;
    LabelingConfig labeling;
    GradientNetConfig scae;
    GradientNetConfig cnn;
    snn::SnnConfig snn;

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

struct RepetitionResult {
    std::uint64_t seed = 0;  // per-repetition seed derived from the master
    double accuracy = 0.0;
};

struct ExperimentReport {
    int schema_version = 1;
    ExperimentConfig config;
    std::vector<RepetitionResult> repetitions;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double wall_clock_sec = 0.0;
    std::vector<std::pair<std::string, std::string>> artifacts;  // name -> path
};

nlohmann::json report_to_json(const ExperimentReport& r);
void save_report(const std::filesystem::path& path, const ExperimentReport& r);

// Everything that must be reproducible run-to-run (excludes wall clock and
// artifact paths); compared byte-for-byte by the determinism checks.
std::string canonical_results(const ExperimentReport& r);

struct RunOptions {
    // When both are set the extractor stage is skipped entirely.
    const FeatureDump* train_features = nullptr;
    const FeatureDump* test_features = nullptr;
    bool save_artifacts = true;        // only when config.out_dir is set
    bool save_feature_dumps = false;   // large; opt-in
    std::function<void(const std::string&)> log;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});

// Extractor front-end alone: trains (if needed) and returns train/test dumps.
struct ExtractedFeatures {
    FeatureDump train;
    FeatureDump test;
    std::vector<std::uint8_t> train_labels;
    std::vector<std::uint8_t> test_labels;
};
ExtractedFeatures extract_for_config(const ExperimentConfig& cfg,
                                     const std::function<void(const std::string&)>& log = nullptr);

enum class SweepAxis { feature_maps, som_neurons, label_fraction };
SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis axis);

struct SweepPoint {
    double axis_value = 0.0;
    bool ok = false;
    std::string error;
    ExperimentReport report;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::som_neurons;
    std::vector<SweepPoint> points;
};

// One experiment per axis value; failures are recorded and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                      const std::vector<double>& values, const RunOptions& opt = {});

// Columns: axis,value,mean_accuracy,stddev_accuracy,repetitions
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);
nlohmann::json sweep_to_json(const SweepResult& sweep);

struct SomHpGrid {
    std::vector<double> eps_i{1.0};
    std::vector<double> eps_f{0.01};
    std::vector<double> sigma_i{10.0};
    std::vector<double> sigma_f{0.01};
    std::vector<double> alpha{1.0};
    std::vector<int> epochs{10};

    std::size_t cardinality() const {
        return eps_i.size() * eps_f.size() * sigma_i.size() * sigma_f.size() *
               alpha.size() * epochs.size();
    }
};
void from_json(const nlohmann::json& j, SomHpGrid& g);

struct GridSearchRow {
    SomHyperParams hp;
    double accuracy = 0.0;
};

struct GridSearchResult {
    SomHyperParams best;
    double best_accuracy = 0.0;
    std::vector<GridSearchRow> table;
};

// Validation protocol: a held-out slice of the training set is the eval set;
// the SOM trains on the rest and the labeling subset is sampled from that
// same rest, so labeling and evaluation never share samples. Ties keep the
// first combination in nested iteration order.
GridSearchResult grid_search_som(const ExperimentConfig& base, const SomHpGrid& grid,
                                 double holdout_fraction = 0.1,
                                 const std::function<void(const std::string&)>& log = nullptr);

void write_grid_csv(const std::filesystem::path& path, const GridSearchResult& res);

// Named, compiled-in configurations (desk-scale for CI, full-scale for
// reproduction runs).
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

}  // namespace somlab
