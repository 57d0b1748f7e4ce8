#include "somlab/labeling.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace somlab {

void accumulate(const SomGrid& grid, std::span<const float> v, int cls, double alpha,
                ClassAccumulators& acc) {
    if (!(alpha > 0.0)) throw std::invalid_argument("labeling: alpha must be positive");
    if (cls < 0 || cls >= kNumClasses)
        throw std::invalid_argument("labeling: class id out of range");
    if (acc.neurons != grid.neurons())
        throw std::invalid_argument("labeling: accumulator size mismatch");

    thread_local std::vector<double> dist;
    distances(grid, v, dist);
    double d_bmu = std::numeric_limits<double>::infinity();
    for (double d : dist) d_bmu = std::min(d_bmu, d);

    for (int n = 0; n < acc.neurons; ++n)
        acc.at(n, cls) += std::exp((d_bmu - dist[n]) / alpha);
    acc.counts[cls] += 1;
    acc.samples += 1;
}

NeuronLabels assign_labels(const ClassAccumulators& acc) {
    if (acc.samples == 0)
        throw std::invalid_argument("labeling: no labeling samples accumulated");
    NeuronLabels out;
    out.label.assign(acc.neurons, kUnlabeled);
    for (int n = 0; n < acc.neurons; ++n) {
        double best = 0.0;
        std::int8_t best_cls = kUnlabeled;
        for (int c = 0; c < kNumClasses; ++c) {
            if (acc.counts[c] == 0) continue;  // class absent from the subset
            const double norm = acc.at(n, c) / double(acc.counts[c]);
            if (norm > best) {
                best = norm;
                best_cls = static_cast<std::int8_t>(c);
            }
        }
        out.label[n] = best_cls;
    }
    return out;
}

int classify(const SomGrid& grid, const NeuronLabels& labels, std::span<const float> v) {
    if (static_cast<int>(labels.label.size()) != grid.neurons())
        throw std::invalid_argument("labeling: label table size mismatch");
    thread_local std::vector<double> dist;
    distances(grid, v, dist);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int n = 0; n < grid.neurons(); ++n) {
        if (labels.label[n] == kUnlabeled) continue;
        if (dist[n] < best_d) {
            best_d = dist[n];
            best = n;
        }
    }
    if (best < 0) throw std::runtime_error("labeling: all neurons unlabeled");
    return labels.label[best];
}

double evaluate(const SomGrid& grid, const NeuronLabels& labels, const Tensor& features,
                const std::vector<std::uint8_t>& truth) {
    if (features.shape.size() != 2 || features.dim(0) == 0)
        throw std::invalid_argument("labeling: empty test set");
    if (static_cast<std::size_t>(features.dim(0)) != truth.size())
        throw std::invalid_argument("labeling: feature/label count mismatch");
    const int n = features.dim(0);
    std::int64_t hits = 0;
    for (int i = 0; i < n; ++i)
        hits += (classify(grid, labels, features.row(i)) == truth[i]);
    return double(hits) / double(n);
}

NeuronLabels label_from_subset(const SomGrid& grid, const Tensor& features,
                               const std::vector<std::uint8_t>& truth,
                               const std::vector<int>& subset, double alpha) {
    ClassAccumulators acc(grid.neurons());
    for (int idx : subset) accumulate(grid, features.row(idx), truth[idx], alpha, acc);
    return assign_labels(acc);
}

void save_labels(const std::filesystem::path& path, const NeuronLabels& labels) {
    nlohmann::json j;
    j["schema_version"] = 1;
    auto& arr = j["labels"] = nlohmann::json::array();
    for (auto l : labels.label) {
        if (l == kUnlabeled)
            arr.push_back(nullptr);
        else
            arr.push_back(int(l));
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("label table: cannot open " + path.string());
    f << j.dump(2) << "\n";
}

NeuronLabels load_labels(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("label table: cannot open " + path.string());
    nlohmann::json j;
    f >> j;
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw std::runtime_error("label table: unsupported schema in " + path.string());
    NeuronLabels out;
    for (const auto& e : j.at("labels"))
        out.label.push_back(e.is_null() ? kUnlabeled
                                        : static_cast<std::int8_t>(e.get<int>()));
    return out;
}

}  // namespace somlab
