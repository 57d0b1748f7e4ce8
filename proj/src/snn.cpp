#include "somlab/snn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "somlab/rng.hpp"

namespace somlab::snn {

namespace {

constexpr int kImg = 28;

// Same-size convolution with clamp-to-edge padding: the mean-subtracted DoG
// kernels then respond with ~0 to contrast-free (constant) inputs even at the
// borders, where zero padding would fabricate edges.
void conv2d_same(std::span<const float> img, int h, int w,
                 const std::vector<float>& kernel, int ksize, float scale,
                 std::vector<float>& out) {
    const int half = ksize / 2;
    out.assign(std::size_t(h) * w, 0.f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.f;
            for (int dy = 0; dy < ksize; ++dy) {
                const int sy = std::clamp(y + dy - half, 0, h - 1);
                for (int dx = 0; dx < ksize; ++dx) {
                    const int sx = std::clamp(x + dx - half, 0, w - 1);
                    acc += img[sy * w + sx] * kernel[dy * ksize + dx];
                }
            }
            out[y * w + x] = acc * scale;
        }
}

std::vector<float> dog_kernel(int size, double sigma1, double sigma2) {
    std::vector<float> k(std::size_t(size) * size);
    const int half = size / 2;
    const double inv2pi = 1.0 / (2.0 * 3.14159265358979323846);
    double sum = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double r2 = double(x - half) * (x - half) + double(y - half) * (y - half);
            const double g1 = std::exp(-0.5 * r2 / (sigma1 * sigma1)) / (sigma1 * sigma1);
            const double g2 = std::exp(-0.5 * r2 / (sigma2 * sigma2)) / (sigma2 * sigma2);
            const double v = inv2pi * (g1 - g2);
            k[y * size + x] = static_cast<float>(v);
            sum += v;
        }
    const float mean = static_cast<float>(sum / (size * size));
    float mx = -std::numeric_limits<float>::infinity();
    for (auto& v : k) {
        v -= mean;
        mx = std::max(mx, v);
    }
    for (auto& v : k) v /= mx;
    return k;
}

}  // namespace

DogFrontend make_dog_frontend(int size, double sigma1, double sigma2, float threshold,
                              int t_bins) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("dog: kernel size must be odd and positive");
    if (t_bins < 1) throw std::invalid_argument("dog: need at least one time bin");
    DogFrontend d;
    d.size = size;
    d.t_bins = t_bins;
    d.threshold = threshold;
    d.on = dog_kernel(size, sigma1, sigma2);
    d.off = dog_kernel(size, sigma2, sigma1);
    return d;
}

SpikeWave dog_encode(const DogFrontend& dog, std::span<const float> image, int h,
                     int w) {
    if (static_cast<int>(image.size()) != h * w)
        throw std::invalid_argument("dog_encode: image size mismatch");
    SpikeWave wave;
    wave.t_bins = dog.t_bins;
    wave.channels = 2;
    wave.h = h;
    wave.w = w;
    wave.time.assign(wave.numel(), kNoSpike);
    wave.potential.assign(wave.numel(), 0.f);
    wave.spike_potential.assign(wave.numel(), 0.f);

    std::vector<float> resp;
    std::vector<std::pair<float, int>> ranked;  // (response, flat index)
    for (int c = 0; c < 2; ++c) {
        conv2d_same(image, h, w, c == 0 ? dog.on : dog.off, dog.size, 255.f, resp);
        for (int i = 0; i < h * w; ++i) {
            const float v = resp[i];
            const int idx = c * h * w + i;
            wave.potential[idx] = std::max(v, 0.f);
            if (v >= dog.threshold && v > 0.f) ranked.push_back({v, idx});
        }
    }
    if (ranked.empty()) return wave;

    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const std::size_t n = ranked.size();
    for (std::size_t r = 0; r < n; ++r) {
        const int bin = static_cast<int>(r * std::size_t(dog.t_bins) / n);
        wave.time[ranked[r].second] = static_cast<std::int16_t>(bin);
        wave.spike_potential[ranked[r].second] = ranked[r].first;
    }
    return wave;
}

SnnConvLayer make_snn_conv(int in_ch, int out_ch, int k, int pad, float mean,
                           float stddev, std::uint64_t seed) {
    SnnConvLayer layer;
    layer.in_ch = in_ch;
    layer.out_ch = out_ch;
    layer.k = k;
    layer.pad = pad;
    layer.w.resize(layer.wsize());
    Rng rng(seed);
    for (auto& v : layer.w)
        v = std::clamp(static_cast<float>(rng.normal(mean, stddev)), 0.f, 1.f);
    return layer;
}

SpikeWave if_conv_forward(const SpikeWave& in, const SnnConvLayer& layer,
                          float threshold) {
    if (in.channels != layer.in_ch)
        throw std::invalid_argument("if_conv: channel mismatch");
    const int k = layer.k, pad = layer.pad;
    const int oh = in.h + 2 * pad - k + 1;
    const int ow = in.w + 2 * pad - k + 1;
    if (oh < 1 || ow < 1) throw std::invalid_argument("if_conv: kernel larger than input");

    SpikeWave out;
    out.t_bins = in.t_bins;
    out.channels = layer.out_ch;
    out.h = oh;
    out.w = ow;
    out.time.assign(out.numel(), kNoSpike);
    out.potential.assign(out.numel(), 0.f);
    out.spike_potential.assign(out.numel(), 0.f);

    // Weights transposed to (c,dy,dx,o) so the scatter inner loop over output
    // maps is contiguous.
    std::vector<float> wt(layer.wsize());
    for (int o = 0; o < layer.out_ch; ++o)
        for (int c = 0; c < layer.in_ch; ++c)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    wt[(((std::size_t(c) * k + dy) * k + dx) * layer.out_ch) + o] =
                        layer.at(o, c, dy, dx);

    // Input spikes bucketed by bin.
    std::vector<std::vector<int>> by_bin(in.t_bins);
    for (std::size_t i = 0; i < in.numel(); ++i)
        if (in.time[i] != kNoSpike) by_bin[in.time[i]].push_back(static_cast<int>(i));

    const int plane = in.h * in.w;
    const int oplane = oh * ow;
    const bool finite = std::isfinite(threshold);

    for (int t = 0; t < in.t_bins; ++t) {
        for (const int idx : by_bin[t]) {
            const int c = idx / plane;
            const int iy = (idx % plane) / in.w;
            const int ix = idx % in.w;
            for (int dy = 0; dy < k; ++dy) {
                const int y = iy + pad - dy;
                if (y < 0 || y >= oh) continue;
                for (int dx = 0; dx < k; ++dx) {
                    const int x = ix + pad - dx;
                    if (x < 0 || x >= ow) continue;
                    const float* wrow = wt.data() + ((std::size_t(c) * k + dy) * k + dx) *
                                                        layer.out_ch;
                    const int cell = y * ow + x;
                    for (int o = 0; o < layer.out_ch; ++o)
                        out.potential[std::size_t(o) * oplane + cell] += wrow[o];
                }
            }
        }
        if (finite) {
            for (std::size_t i = 0; i < out.numel(); ++i)
                if (out.time[i] == kNoSpike && out.potential[i] >= threshold) {
                    out.time[i] = static_cast<std::int16_t>(t);
                    out.spike_potential[i] = out.potential[i];
                }
        }
    }
    return out;
}

SpikeWave spike_pool(const SpikeWave& in, int k, int s, int pad) {
    if (in.h < 1 || in.w < 1) throw std::invalid_argument("spike_pool: empty input");
    const int oh = (in.h + 2 * pad - k) / s + 1;
    const int ow = (in.w + 2 * pad - k) / s + 1;
    SpikeWave out;
    out.t_bins = in.t_bins;
    out.channels = in.channels;
    out.h = oh;
    out.w = ow;
    out.time.assign(out.numel(), kNoSpike);
    out.potential.assign(out.numel(), 0.f);
    out.spike_potential.assign(out.numel(), 0.f);

    for (int c = 0; c < in.channels; ++c)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                std::int16_t best_t = kNoSpike;
                float best_pot = 0.f, best_spot = 0.f;
                for (int dy = 0; dy < k; ++dy) {
                    const int y = oy * s - pad + dy;
                    if (y < 0 || y >= in.h) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        const int x = ox * s - pad + dx;
                        if (x < 0 || x >= in.w) continue;
                        const std::size_t i = in.at(c, y, x);
                        best_pot = std::max(best_pot, in.potential[i]);
                        best_spot = std::max(best_spot, in.spike_potential[i]);
                        if (in.time[i] != kNoSpike &&
                            (best_t == kNoSpike || in.time[i] < best_t))
                            best_t = in.time[i];
                    }
                }
                const std::size_t o = out.at(c, oy, ox);
                out.time[o] = best_t;
                out.potential[o] = best_pot;
                out.spike_potential[o] = best_spot;
            }
    return out;
}

std::vector<Winner> select_winners(const SpikeWave& wave, int kwta, int radius) {
    if (kwta < 1) throw std::invalid_argument("select_winners: kwta must be >= 1");
    std::vector<Winner> winners;
    std::vector<char> map_out(wave.channels, 0);
    const int plane = wave.h * wave.w;

    while (static_cast<int>(winners.size()) < kwta) {
        int best = -1;
        for (std::size_t i = 0; i < wave.numel(); ++i) {
            if (wave.time[i] == kNoSpike) continue;
            const int c = static_cast<int>(i) / plane;
            if (map_out[c]) continue;
            const int y = (static_cast<int>(i) % plane) / wave.w;
            const int x = static_cast<int>(i) % wave.w;
            bool suppressed = false;
            for (const auto& w : winners)
                if (std::abs(y - w.y) <= radius && std::abs(x - w.x) <= radius) {
                    suppressed = true;
                    break;
                }
            if (suppressed) continue;
            if (best < 0 || wave.time[i] < wave.time[best] ||
                (wave.time[i] == wave.time[best] &&
                 wave.spike_potential[i] > wave.spike_potential[best]))
                best = static_cast<int>(i);
        }
        if (best < 0) break;
        Winner w;
        w.map = best / plane;
        w.y = (best % plane) / wave.w;
        w.x = best % wave.w;
        w.t = wave.time[best];
        w.potential = wave.spike_potential[best];
        winners.push_back(w);
        map_out[w.map] = 1;
    }
    return winners;
}

void stdp_update(SnnConvLayer& layer, const SpikeWave& pre,
                 const std::vector<Winner>& winners, float a_plus, float a_minus) {
    const int k = layer.k, pad = layer.pad;
    for (const auto& win : winners) {
        for (int c = 0; c < layer.in_ch; ++c)
            for (int dy = 0; dy < k; ++dy) {
                const int iy = win.y + dy - pad;
                for (int dx = 0; dx < k; ++dx) {
                    const int ix = win.x + dx - pad;
                    bool ltp = false;
                    if (iy >= 0 && iy < pre.h && ix >= 0 && ix < pre.w) {
                        const std::size_t i = pre.at(c, iy, ix);
                        ltp = pre.time[i] != kNoSpike && pre.time[i] <= win.t;
                    }
                    float& w = layer.at(win.map, c, dy, dx);
                    w += (ltp ? a_plus : a_minus) * w * (1.f - w);
                    w = std::clamp(w, 0.f, 1.f);
                }
            }
    }
}

double convergence_metric(const SnnConvLayer& layer) {
    double s = 0.0;
    for (const float w : layer.w) s += double(w) * (1.0 - double(w));
    return s / double(layer.wsize());
}

SnnNetwork make_snn(const SnnConfig& cfg, std::uint64_t seed) {
    SnnNetwork net;
    net.cfg = cfg;
    net.dog = make_dog_frontend(cfg.dog_size, cfg.dog_sigma_on, cfg.dog_sigma_off,
                                cfg.dog_threshold, cfg.t_bins);
    net.conv1 = make_snn_conv(2, 64, 5, 2, cfg.w_init_mean, cfg.w_init_std,
                              derive_seed(seed, 1));
    net.conv2 = make_snn_conv(64, cfg.maps, 5, 1, cfg.w_init_mean, cfg.w_init_std,
                              derive_seed(seed, 2));
    return net;
}

namespace {

// Shared by training and readout: everything before conv2.
SpikeWave front_to_pool1(const SnnNetwork& net, std::span<const float> image) {
    const SpikeWave enc = dog_encode(net.dog, image, kImg, kImg);
    const SpikeWave c1 = if_conv_forward(enc, net.conv1, net.cfg.conv1_threshold);
    return spike_pool(c1, 2, 2, 1);
}

LayerTrainStats train_layer(SnnNetwork& net, const Tensor& images, int layer_idx,
                            std::uint64_t seed) {
    const int n = images.dim(0);
    SnnConvLayer& layer = layer_idx == 1 ? net.conv1 : net.conv2;
    LayerTrainStats stats;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);

    float a_plus = net.cfg.a_plus;
    float a_minus = net.cfg.a_minus;
    const float rate_ratio = net.cfg.a_plus != 0.f ? net.cfg.a_minus / net.cfg.a_plus : 0.f;
    int since_doubling = 0;

    for (int pass = 0; pass < net.cfg.max_passes && !stats.converged; ++pass) {
        rng.shuffle(order);
        stats.passes = pass + 1;
        for (int i = 0; i < n; ++i) {
            const auto image = images.row(order[i]);
            if (layer_idx == 1) {
                const SpikeWave enc = dog_encode(net.dog, image, kImg, kImg);
                const SpikeWave c1 =
                    if_conv_forward(enc, net.conv1, net.cfg.conv1_threshold);
                const auto winners =
                    select_winners(c1, net.cfg.kwta, net.cfg.inhibition_radius);
                stdp_update(net.conv1, enc, winners, a_plus, a_minus);
            } else {
                const SpikeWave p1 = front_to_pool1(net, image);
                const SpikeWave c2 =
                    if_conv_forward(p1, net.conv2, net.cfg.conv2_train_threshold);
                const auto winners =
                    select_winners(c2, net.cfg.kwta, net.cfg.inhibition_radius);
                stdp_update(net.conv2, p1, winners, a_plus, a_minus);
            }
            ++stats.stimuli;
            if (net.cfg.lr_doubling_interval > 0 &&
                ++since_doubling >= net.cfg.lr_doubling_interval) {
                since_doubling = 0;
                a_plus = std::min(2.f * a_plus, net.cfg.lr_max_a_plus);
                a_minus = a_plus * rate_ratio;
            }
            if (stats.stimuli % 50 == 0 &&
                convergence_metric(layer) < net.cfg.convergence_threshold) {
                stats.converged = true;
                break;
            }
        }
        stats.metric_per_pass.push_back(convergence_metric(layer));
        if (stats.metric_per_pass.back() < net.cfg.convergence_threshold)
            stats.converged = true;
    }
    return stats;
}

}  // namespace

SnnTrainStats train_layerwise(SnnNetwork& net, const Tensor& images,
                              std::uint64_t seed) {
    if (images.shape.size() != 2 || images.dim(1) != kImg * kImg)
        throw std::invalid_argument("snn: expected images as {N, 784}");
    if (images.dim(0) == 0) throw std::invalid_argument("snn: empty training set");
    SnnTrainStats stats;
    stats.conv1 = train_layer(net, images, 1, derive_seed(seed, 11));
    stats.conv2 = train_layer(net, images, 2, derive_seed(seed, 12));
    return stats;
}

std::vector<float> extract_features(const SnnNetwork& net,
                                    std::span<const float> image) {
    const SpikeWave p1 = front_to_pool1(net, image);
    const SpikeWave c2 = if_conv_forward(p1, net.conv2, kInfiniteThreshold);
    const SpikeWave p2 = spike_pool(c2, 2, 2, 1);
    return p2.potential;
}

Tensor extract_features_all(const SnnNetwork& net, const Tensor& images) {
    const int n = images.dim(0);
    Tensor out({n, net.feature_dim()});
    for (int i = 0; i < n; ++i) {
        const auto f = extract_features(net, images.row(i));
        if (static_cast<int>(f.size()) != net.feature_dim())
            throw std::logic_error("snn: unexpected feature length");
        std::copy(f.begin(), f.end(), out.data.begin() + std::size_t(i) * f.size());
    }
    return out;
}

// --- checkpoint ------------------------------------------------------------

namespace {
constexpr std::uint32_t kSnnMagic = 0x534e4e43;  // "SNNC"
constexpr std::uint32_t kSnnVersion = 1;

template <typename T>
void put_pod(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get_pod(std::ifstream& f, T& v) {
    if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw std::runtime_error("snn checkpoint: truncated");
}
void put_floats(std::ofstream& f, const std::vector<float>& v) {
    put_pod(f, std::uint64_t(v.size()));
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}
void get_floats(std::ifstream& f, std::vector<float>& v) {
    std::uint64_t n = 0;
    get_pod(f, n);
    v.resize(n);
    if (!f.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(float))))
        throw std::runtime_error("snn checkpoint: truncated weights");
}
}  // namespace

void save_snn(const std::filesystem::path& path, const SnnNetwork& net) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("snn checkpoint: cannot open " + path.string());
    put_pod(f, kSnnMagic);
    put_pod(f, kSnnVersion);
    put_pod(f, net.cfg);
    put_floats(f, net.conv1.w);
    put_floats(f, net.conv2.w);
    if (!f) throw std::runtime_error("snn checkpoint: write failed");
}

SnnNetwork load_snn(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("snn checkpoint: cannot open " + path.string());
    std::uint32_t magic = 0, version = 0;
    get_pod(f, magic);
    get_pod(f, version);
    if (magic != kSnnMagic) throw std::runtime_error("snn checkpoint: bad magic");
    if (version != kSnnVersion)
        throw std::runtime_error("snn checkpoint: unsupported version");
    SnnConfig cfg;
    get_pod(f, cfg);
    SnnNetwork net = make_snn(cfg, 0);
    get_floats(f, net.conv1.w);
    get_floats(f, net.conv2.w);
    if (net.conv1.w.size() != net.conv1.wsize() ||
        net.conv2.w.size() != net.conv2.wsize())
        throw std::runtime_error("snn checkpoint: weight size mismatch");
    return net;
}

void dump_conv1_kernels_pgm(const std::filesystem::path& path, const SnnNetwork& net) {
    const auto& l = net.conv1;
    const int k = l.k;
    const int cols = 8, rows = (l.out_ch + cols - 1) / cols;
    const int tile_w = l.in_ch * k + l.in_ch;  // channels side by side + gaps
    const int tile_h = k + 1;
    const int W = cols * tile_w + 1, H = rows * tile_h + 1;
    std::vector<unsigned char> img(std::size_t(W) * H, 32);
    for (int o = 0; o < l.out_ch; ++o) {
        const int ty = (o / cols) * tile_h + 1;
        const int tx = (o % cols) * tile_w + 1;
        for (int c = 0; c < l.in_ch; ++c)
            for (int y = 0; y < k; ++y)
                for (int x = 0; x < k; ++x) {
                    const float v = l.at(o, c, y, x);
                    img[std::size_t(ty + y) * W + tx + c * (k + 1) + x] =
                        static_cast<unsigned char>(std::clamp(v, 0.f, 1.f) * 255.f);
                }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pgm dump: cannot open " + path.string());
    f << "P5\n" << W << " " << H << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size()));
}

}  // namespace somlab::snn
