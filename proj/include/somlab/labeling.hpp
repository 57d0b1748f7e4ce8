#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "somlab/som.hpp"

namespace somlab {

inline constexpr int kNumClasses = 10;

// Per-neuron class-mass accumulators plus per-class sample counts.
struct ClassAccumulators {
    int neurons = 0;
    std::vector<double> mass;                        // neurons * kNumClasses
    std::array<std::int64_t, kNumClasses> counts{};  // labeling samples per class
    std::int64_t samples = 0;

    explicit ClassAccumulators(int n_neurons = 0)
        : neurons(n_neurons),
          mass(std::size_t(n_neurons) * kNumClasses, 0.0) {}

    double& at(int neuron, int cls) { return mass[std::size_t(neuron) * kNumClasses + cls]; }
    double at(int neuron, int cls) const {
        return mass[std::size_t(neuron) * kNumClasses + cls];
    }
};

constexpr std::int8_t kUnlabeled = -1;

struct NeuronLabels {
    std::vector<std::int8_t> label;  // class id or kUnlabeled

    int labeled_count() const {
        int c = 0;
        for (auto l : label) c += (l != kUnlabeled);
        return c;
    }
};

// One labeled sample: every neuron adds its activation normalized by the
// BMU's, computed as exp((d_bmu - d_n)/alpha) so high-dimensional distances
// cannot underflow. The BMU contributes exactly 1.
void accumulate(const SomGrid& grid, std::span<const float> v, int cls, double alpha,
                ClassAccumulators& acc);

// Normalizes each class column by its sample count, then takes the argmax.
// Neurons whose accumulators are all zero stay unlabeled; ties resolve to
// the lowest class id.
NeuronLabels assign_labels(const ClassAccumulators& acc);

// BMU election restricted to labeled neurons.
int classify(const SomGrid& grid, const NeuronLabels& labels, std::span<const float> v);

// Fraction of rows of `features` whose predicted class matches `truth`.
double evaluate(const SomGrid& grid, const NeuronLabels& labels, const Tensor& features,
                const std::vector<std::uint8_t>& truth);

// Convenience: label a grid from (features, truth) rows listed in `subset`.
NeuronLabels label_from_subset(const SomGrid& grid, const Tensor& features,
                               const std::vector<std::uint8_t>& truth,
                               const std::vector<int>& subset, double alpha);

// Versioned JSON label table (neuron index -> class id or null).
void save_labels(const std::filesystem::path& path, const NeuronLabels& labels);
NeuronLabels load_labels(const std::filesystem::path& path);

}  // namespace somlab
