#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "somlab/tensor.hpp"

namespace somlab {

struct SomHyperParams {
    double eps_i = 1.0;     // initial learning rate
    double eps_f = 0.01;    // final learning rate
    double sigma_i = 10.0;  // initial neighborhood width
    double sigma_f = 0.01;  // final neighborhood width
    double alpha = 1.0;     // Gaussian activity width (labeling-critical)
    int epochs = 10;

    void validate() const;
};

// Rectangular lattice of neurons; neuron n sits at (n % width, n / width)
// and owns a dim-dimensional prototype stored row-major in `weights`.
struct SomGrid {
    int width = 0;
    int height = 0;
    int dim = 0;
    std::uint64_t seed = 0;

    std::vector<float> weights;  // neurons() * dim

    int neurons() const { return width * height; }
    std::pair<int, int> position(int n) const { return {n % width, n / width}; }
    std::span<const float> weight(int n) const {
        return {weights.data() + static_cast<std::size_t>(n) * dim,
                static_cast<std::size_t>(dim)};
    }
    std::span<float> weight(int n) {
        return {weights.data() + static_cast<std::size_t>(n) * dim,
                static_cast<std::size_t>(dim)};
    }
};

// Prototypes initialized uniformly in [0,1]^dim from `seed`.
SomGrid make_grid(int width, int height, int dim, std::uint64_t seed);

// Squarest (h, w) factorization of k, h <= w; e.g. 256 -> (16, 16).
std::pair<int, int> squarest_factorization(int k);

// Euclidean (non-squared) distance.
double euclidean_distance(std::span<const float> v, std::span<const float> w);

// Gaussian afferent activity exp(-||v-w||/alpha), in (0,1].
double activity(std::span<const float> v, std::span<const float> w, double alpha);

// Index of the maximal activity; ties resolve to the lowest index.
int elect_winner(std::span<const double> activities);

// Gaussian lattice neighborhood exp(-||p_n-p_s||^2 / (2 sigma^2)).
double neighborhood(std::pair<int, int> p_n, std::pair<int, int> p_s, double sigma);

// Geometric interpolation x_i * (x_f/x_i)^(t/t_f); endpoints returned exactly.
double schedule(double x_i, double x_f, int t, int t_f);

// One online step: w_n += eps * h_sigma(n, winner) * (v - w_n) for all n.
void update_weights(SomGrid& grid, std::span<const float> v, int winner, double eps,
                    double sigma);

// Winner for a raw input = nearest prototype (activity argmax is distance
// argmin for any alpha). Exposed for training, labeling and classification.
int nearest_neuron(const SomGrid& grid, std::span<const float> v);

// Distances from v to every prototype.
void distances(const SomGrid& grid, std::span<const float> v, std::vector<double>& out);

// Online training: `epochs` passes, each presenting every row of data once in
// a freshly shuffled order; eps/sigma follow the geometric schedules, one
// value per epoch. Deterministic in (grid, data, hp, shuffle_seed).
void train(SomGrid& grid, const Tensor& data, const SomHyperParams& hp,
           std::uint64_t shuffle_seed);

// Min-max normalization of a feature matrix to [0,1] per dimension,
// available behind a config flag (off by default).
void minmax_normalize(Tensor& features);

// Versioned binary checkpoint; round-trips bit-exactly.
void save_grid(const std::filesystem::path& path, const SomGrid& grid,
               const SomHyperParams& hp);
SomGrid load_grid(const std::filesystem::path& path, SomHyperParams* hp_out = nullptr);

}  // namespace somlab
