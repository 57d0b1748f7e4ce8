#include "somlab/som.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "somlab/rng.hpp"

namespace somlab {

namespace {

// expf underflows to exactly 0 below roughly -103.98; skipping those factors
// is indistinguishable from multiplying by the computed 0.
constexpr double kExpFloorF32 = -104.0;

// 16 independent accumulators so the reduction vectorizes without
// reassociation; the summation order is fixed, so results are reproducible.
double sq_distance(const float* v, const float* w, int dim) {
    float acc[16] = {};
    int i = 0;
    for (; i + 16 <= dim; i += 16)
        for (int j = 0; j < 16; ++j) {
            const float d = v[i + j] - w[i + j];
            acc[j] += d * d;
        }
    float tail = 0.f;
    for (; i < dim; ++i) {
        const float d = v[i] - w[i];
        tail += d * d;
    }
    double total = double(tail);
    for (int j = 0; j < 16; ++j) total += double(acc[j]);
    return total;
}

}  // namespace

void SomHyperParams::validate() const {
    if (!(eps_i >= eps_f) || !(eps_f > 0.0))
        throw std::invalid_argument("som: require eps_i >= eps_f > 0");
    if (!(sigma_i >= sigma_f) || !(sigma_f > 0.0))
        throw std::invalid_argument("som: require sigma_i >= sigma_f > 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("som: require alpha > 0");
    if (epochs < 1) throw std::invalid_argument("som: require epochs >= 1");
}

SomGrid make_grid(int width, int height, int dim, std::uint64_t seed) {
    if (width < 1 || height < 1 || dim < 1)
        throw std::invalid_argument("som: grid dimensions must be positive");
    SomGrid g;
    g.width = width;
    g.height = height;
    g.dim = dim;
    g.seed = seed;
    g.weights.resize(std::size_t(g.neurons()) * dim);
    Rng rng(seed);
    for (auto& w : g.weights) w = static_cast<float>(rng.uniform());
    return g;
}

std::pair<int, int> squarest_factorization(int k) {
    if (k < 1) throw std::invalid_argument("som: neuron count must be positive");
    for (int h = static_cast<int>(std::sqrt(double(k))); h >= 1; --h)
        if (k % h == 0) return {h, k / h};
    return {1, k};
}

double euclidean_distance(std::span<const float> v, std::span<const float> w) {
    if (v.size() != w.size())
        throw std::invalid_argument("som: dimension mismatch");
    return std::sqrt(sq_distance(v.data(), w.data(), static_cast<int>(v.size())));
}

double activity(std::span<const float> v, std::span<const float> w, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("som: alpha must be positive");
    return std::exp(-euclidean_distance(v, w) / alpha);
}

int elect_winner(std::span<const double> activities) {
    if (activities.empty()) throw std::invalid_argument("som: empty grid");
    int best = 0;
    for (int i = 1; i < static_cast<int>(activities.size()); ++i)
        if (activities[i] > activities[best]) best = i;
    return best;
}

double neighborhood(std::pair<int, int> p_n, std::pair<int, int> p_s, double sigma) {
    const double dx = p_n.first - p_s.first;
    const double dy = p_n.second - p_s.second;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

double schedule(double x_i, double x_f, int t, int t_f) {
    if (t_f <= 0) throw std::invalid_argument("som: schedule needs t_f >= 1");
    if (t < 0 || t > t_f) throw std::invalid_argument("som: schedule needs 0 <= t <= t_f");
    if (t == 0) return x_i;
    if (t == t_f) return x_f;
    return x_i * std::pow(x_f / x_i, double(t) / double(t_f));
}

int nearest_neuron(const SomGrid& grid, std::span<const float> v) {
    if (grid.neurons() == 0) throw std::invalid_argument("som: empty grid");
    if (static_cast<int>(v.size()) != grid.dim)
        throw std::invalid_argument("som: dimension mismatch");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    const float* w = grid.weights.data();
    for (int n = 0; n < grid.neurons(); ++n, w += grid.dim) {
        const double d = sq_distance(v.data(), w, grid.dim);
        if (d < best_d) {
            best_d = d;
            best = n;
        }
    }
    return best;
}

void distances(const SomGrid& grid, std::span<const float> v, std::vector<double>& out) {
    out.resize(grid.neurons());
    const float* w = grid.weights.data();
    for (int n = 0; n < grid.neurons(); ++n, w += grid.dim)
        out[n] = std::sqrt(sq_distance(v.data(), w, grid.dim));
}

void update_weights(SomGrid& grid, std::span<const float> v, int winner, double eps,
                    double sigma) {
    if (winner < 0 || winner >= grid.neurons())
        throw std::invalid_argument("som: invalid winner index");
    const auto [sx, sy] = grid.position(winner);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const float* vp = v.data();
    for (int y = 0; y < grid.height; ++y) {
        const double dy2 = double(y - sy) * double(y - sy);
        for (int x = 0; x < grid.width; ++x) {
            const double dx2 = double(x - sx) * double(x - sx);
            const double arg = -(dx2 + dy2) * inv2s2;
            if (arg <= kExpFloorF32) continue;
            const float f = static_cast<float>(eps * std::exp(arg));
            float* w = grid.weights.data() + (std::size_t(y) * grid.width + x) * grid.dim;
            for (int i = 0; i < grid.dim; ++i) w[i] += f * (vp[i] - w[i]);
        }
    }
}

void train(SomGrid& grid, const Tensor& data, const SomHyperParams& hp,
           std::uint64_t shuffle_seed) {
    hp.validate();
    if (data.shape.size() != 2 || data.dim(1) != grid.dim)
        throw std::invalid_argument("som: data must be {N, dim}, dim = " +
                                    std::to_string(grid.dim) + ", got " +
                                    shape_str(data.shape));
    const int n = data.dim(0);
    if (n == 0) throw std::invalid_argument("som: empty dataset");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(shuffle_seed);

    for (int t = 0; t < hp.epochs; ++t) {
        const double eps = schedule(hp.eps_i, hp.eps_f, t, hp.epochs);
        const double sigma = schedule(hp.sigma_i, hp.sigma_f, t, hp.epochs);
        rng.shuffle(order);
        for (int i = 0; i < n; ++i) {
            const auto v = data.row(order[i]);
            const int s = nearest_neuron(grid, v);
            update_weights(grid, v, s, eps, sigma);
        }
    }
}

void minmax_normalize(Tensor& features) {
    if (features.shape.size() != 2) throw std::invalid_argument("expected {N, D}");
    const int n = features.dim(0), d = features.dim(1);
    if (n == 0) return;
    std::vector<float> lo(d, std::numeric_limits<float>::infinity());
    std::vector<float> hi(d, -std::numeric_limits<float>::infinity());
    for (int i = 0; i < n; ++i) {
        const float* r = features.ptr() + std::size_t(i) * d;
        for (int j = 0; j < d; ++j) {
            lo[j] = std::min(lo[j], r[j]);
            hi[j] = std::max(hi[j], r[j]);
        }
    }
    for (int i = 0; i < n; ++i) {
        float* r = features.ptr() + std::size_t(i) * d;
        for (int j = 0; j < d; ++j) {
            const float range = hi[j] - lo[j];
            r[j] = range > 0.f ? (r[j] - lo[j]) / range : 0.f;
        }
    }
}

namespace {
constexpr std::uint32_t kGridMagic = 0x534f4d47;  // "SOMG"
constexpr std::uint32_t kGridVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get(std::ifstream& f, T& v) {
    if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw std::runtime_error("som checkpoint: truncated");
}
}  // namespace

void save_grid(const std::filesystem::path& path, const SomGrid& grid,
               const SomHyperParams& hp) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("som checkpoint: cannot open " + path.string());
    put(f, kGridMagic);
    put(f, kGridVersion);
    put(f, std::int32_t(grid.width));
    put(f, std::int32_t(grid.height));
    put(f, std::int32_t(grid.dim));
    put(f, grid.seed);
    put(f, hp.eps_i);
    put(f, hp.eps_f);
    put(f, hp.sigma_i);
    put(f, hp.sigma_f);
    put(f, hp.alpha);
    put(f, std::int32_t(hp.epochs));
    f.write(reinterpret_cast<const char*>(grid.weights.data()),
            static_cast<std::streamsize>(grid.weights.size() * sizeof(float)));
    if (!f) throw std::runtime_error("som checkpoint: write failed");
}

SomGrid load_grid(const std::filesystem::path& path, SomHyperParams* hp_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("som checkpoint: cannot open " + path.string());
    std::uint32_t magic = 0, version = 0;
    get(f, magic);
    if (magic != kGridMagic)
        throw std::runtime_error("som checkpoint: bad magic in " + path.string());
    get(f, version);
    if (version != kGridVersion)
        throw std::runtime_error("som checkpoint: unsupported version " +
                                 std::to_string(version));
    SomGrid g;
    std::int32_t w = 0, h = 0, d = 0, epochs = 0;
    get(f, w);
    get(f, h);
    get(f, d);
    get(f, g.seed);
    SomHyperParams hp;
    get(f, hp.eps_i);
    get(f, hp.eps_f);
    get(f, hp.sigma_i);
    get(f, hp.sigma_f);
    get(f, hp.alpha);
    get(f, epochs);
    hp.epochs = epochs;
    g.width = w;
    g.height = h;
    g.dim = d;
    g.weights.resize(std::size_t(g.neurons()) * g.dim);
    if (!f.read(reinterpret_cast<char*>(g.weights.data()),
                static_cast<std::streamsize>(g.weights.size() * sizeof(float))))
        throw std::runtime_error("som checkpoint: truncated weights");
    if (hp_out) *hp_out = hp;
    return g;
}

}  // namespace somlab
