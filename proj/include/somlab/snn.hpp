#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "somlab/tensor.hpp"

namespace somlab::snn {

// Rank-coded spike volley: per neuron, the bin of its single spike (or
// kNoSpike) plus membrane potentials. `potential` carries the full temporal
// sum; `spike_potential` the value at firing time (used for WTA tie-breaks).
inline constexpr std::int16_t kNoSpike = -1;

struct SpikeWave {
    int t_bins = 0, channels = 0, h = 0, w = 0;
    std::vector<std::int16_t> time;        // channels*h*w, bin index or kNoSpike
    std::vector<float> potential;          // final accumulated potential
    std::vector<float> spike_potential;    // potential at spike time (0 if none)

    std::size_t numel() const { return std::size_t(channels) * h * w; }
    std::size_t at(int c, int y, int x) const {
        return (std::size_t(c) * h + y) * w + x;
    }
    bool spiked(std::size_t i) const { return time[i] != kNoSpike; }
    int spike_count() const {
        int n = 0;
        for (auto t : time) n += (t != kNoSpike);
        return n;
    }
};

inline constexpr float kInfiniteThreshold = std::numeric_limits<float>::infinity();

struct SnnConfig {
    int maps = 64;                    // conv2 feature maps (X)
    int t_bins = 15;
    int dog_size = 7;
    double dog_sigma_on = 1.0;        // center sigma of the on-channel
    double dog_sigma_off = 2.0;
    float dog_threshold = 50.0f;      // on the 0..255 intensity scale
    float conv1_threshold = 15.0f;
    float conv2_train_threshold = 10.0f;  // finite during STDP; readout uses inf
    float a_plus = 0.004f;
    float a_minus = -0.003f;
    int kwta = 5;
    int inhibition_radius = 3;
    float w_init_mean = 0.8f;
    float w_init_std = 0.05f;
    double convergence_threshold = 0.01;  // on mean w*(1-w)
    int max_passes = 2;
    // Rate ramp: a_plus doubles every `lr_doubling_interval` stimuli up to
    // `lr_max_a_plus`, a_minus keeping its initial ratio. 0 = constant rates.
    int lr_doubling_interval = 0;
    float lr_max_a_plus = 0.15f;
};

// 2-channel on/off DoG bank (window `size`, sigmas s1/s2 and swapped),
// each kernel mean-subtracted and scaled to peak 1.
struct DogFrontend {
    int size = 7;
    int t_bins = 15;
    float threshold = 50.0f;
    std::vector<float> on;   // size*size
    std::vector<float> off;
};

DogFrontend make_dog_frontend(int size, double sigma1, double sigma2, float threshold,
                              int t_bins);

// Contrast-to-latency coding: rectified DoG responses (input scaled to
// 0..255) below `threshold` never spike; the rest are ranked by descending
// magnitude and spread evenly over the t_bins bins (strongest first).
SpikeWave dog_encode(const DogFrontend& dog, std::span<const float> image, int h,
                     int w);

struct SnnConvLayer {
    int in_ch = 0, out_ch = 0, k = 0, pad = 0;
    std::vector<float> w;  // {out_ch, in_ch, k, k}, clamped to [0,1]

    std::size_t wsize() const { return std::size_t(out_ch) * in_ch * k * k; }
    float& at(int o, int c, int dy, int dx) {
        return w[((std::size_t(o) * in_ch + c) * k + dy) * k + dx];
    }
    float at(int o, int c, int dy, int dx) const {
        return w[((std::size_t(o) * in_ch + c) * k + dy) * k + dx];
    }
};

SnnConvLayer make_snn_conv(int in_ch, int out_ch, int k, int pad, float mean,
                           float stddev, std::uint64_t seed);

// Integrate-and-fire convolution over the spike wave. Potentials accumulate
// conv contributions bin by bin; a neuron fires once at the first bin where
// its potential reaches `threshold` and stays silent afterwards. An infinite
// threshold yields no spikes and exposes the full temporal sum.
SpikeWave if_conv_forward(const SpikeWave& in, const SnnConvLayer& layer,
                          float threshold);

// Spike-domain pooling: earliest spike in each window propagates (at most one
// output spike), potentials take the window max. Output size
// floor((n + 2*pad - k)/s) + 1.
SpikeWave spike_pool(const SpikeWave& in, int k = 2, int s = 2, int pad = 1);

struct Winner {
    int map = 0, y = 0, x = 0;
    std::int16_t t = 0;
    float potential = 0.f;
};

// Greedy earliest-spike k-WTA (ties: higher spike-time potential, then lower
// flat index). Each pick suppresses its whole map and a square of half-width
// `radius` across all maps.
std::vector<Winner> select_winners(const SpikeWave& wave, int kwta, int radius);

// Simplified STDP with multiplicative soft bounds: for each winner kernel
// weight, dw = a_plus*w*(1-w) when the presynaptic site spiked at or before
// the winner, a_minus*w*(1-w) otherwise; clamped to [0,1].
void stdp_update(SnnConvLayer& layer, const SpikeWave& pre, const std::vector<Winner>& winners,
                 float a_plus, float a_minus);

// Mean w*(1-w) over the layer; approaches 0 as weights saturate.
double convergence_metric(const SnnConvLayer& layer);

struct SnnNetwork {
    SnnConfig cfg;
    DogFrontend dog;
    SnnConvLayer conv1;  // 2 -> 64, 5x5, same padding (pad 2)
    SnnConvLayer conv2;  // 64 -> maps, 5x5, pad 1

    int feature_dim() const { return cfg.maps * 7 * 7; }
    std::string topology() const {
        return "dog7x2-64c5-p2-" + std::to_string(cfg.maps) + "c5-p2";
    }
};

SnnNetwork make_snn(const SnnConfig& cfg, std::uint64_t seed);

struct LayerTrainStats {
    int passes = 0;
    int stimuli = 0;
    bool converged = false;
    std::vector<double> metric_per_pass;  // convergence metric after each pass
};

struct SnnTrainStats {
    LayerTrainStats conv1, conv2;
};

// Layer-by-layer STDP: conv1 to convergence (or max_passes), then conv2 with
// conv1 frozen. Images only; labels never enter. Deterministic in (images,
// cfg, seed).
SnnTrainStats train_layerwise(SnnNetwork& net, const Tensor& images,
                              std::uint64_t seed);

// Readout: conv2 at infinite threshold, final potentials pooled 2x2/2 pad 1
// and flattened (maps*7*7 for 28x28 inputs). Non-negative, deterministic.
std::vector<float> extract_features(const SnnNetwork& net, std::span<const float> image);

Tensor extract_features_all(const SnnNetwork& net, const Tensor& images);

// Versioned checkpoint with config + kernels.
void save_snn(const std::filesystem::path& path, const SnnNetwork& net);
SnnNetwork load_snn(const std::filesystem::path& path);

// 8-bit PGM grid of conv1 kernels for qualitative inspection.
void dump_conv1_kernels_pgm(const std::filesystem::path& path, const SnnNetwork& net);

}  // namespace somlab::snn
