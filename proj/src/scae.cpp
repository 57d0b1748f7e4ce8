#include "somlab/scae.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "somlab/nn/losses.hpp"
#include "somlab/rng.hpp"

namespace somlab {

namespace {

constexpr int kImg = 28;
constexpr int kImgPix = kImg * kImg;

void check_images(const Tensor& images) {
    if (images.shape.size() != 2 || images.dim(1) != kImgPix)
        throw std::invalid_argument("expected images as {N, 784}, got " +
                                    shape_str(images.shape));
}

Tensor as_image(std::span<const float> row) {
    Tensor t({1, kImg, kImg});
    std::copy(row.begin(), row.end(), t.data.begin());
    return t;
}

void glorot_fill(Rng& rng, std::vector<float>& w, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
}

nn::Conv2d<float> make_conv(Rng& rng, int in_ch, int out_ch, int k, int pad) {
    nn::Conv2d<float> c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.k = k;
    c.pad = pad;
    c.w = Tensor({out_ch, in_ch, k, k});
    c.b.assign(out_ch, 0.f);
    glorot_fill(rng, c.w.data, in_ch * k * k, out_ch * k * k);
    return c;
}

nn::Deconv2d<float> make_deconv(Rng& rng, int in_ch, int out_ch, int k) {
    nn::Deconv2d<float> d;
    d.in_ch = in_ch;
    d.out_ch = out_ch;
    d.k = k;
    d.pad = 0;
    d.w = Tensor({in_ch, out_ch, k, k});
    d.b.assign(out_ch, 0.f);
    glorot_fill(rng, d.w.data, in_ch * k * k, out_ch * k * k);
    return d;
}

struct GradBuf {
    Tensor w;
    std::vector<float> b;

    void init_like_conv(const Tensor& kw, std::size_t nb) {
        w = Tensor(kw.shape);
        b.assign(nb, 0.f);
    }
    void add(const Tensor& gw, const std::vector<float>& gb) {
        for (std::size_t i = 0; i < w.numel(); ++i) w.data[i] += gw.data[i];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += gb[i];
    }
    void scale(float s) {
        for (auto& v : w.data) v *= s;
        for (auto& v : b) v *= s;
    }
};

}  // namespace

ScaeModel make_scae(int maps, std::uint64_t seed, float lambda_w, float lambda_a) {
    if (maps < 1) throw std::invalid_argument("scae: maps must be >= 1");
    ScaeModel m;
    m.maps = maps;
    m.lambda_w = lambda_w;
    m.lambda_a = lambda_a;
    Rng rng(seed);
    m.enc1 = make_conv(rng, 1, 64, 5, 0);
    m.enc2 = make_conv(rng, 64, maps, 5, 0);
    m.dec1 = make_deconv(rng, maps, 64, 5);
    m.dec2 = make_deconv(rng, 64, 1, 5);
    return m;
}

CnnBaselineModel make_cnn_baseline(int maps, std::uint64_t seed) {
    if (maps < 1) throw std::invalid_argument("cnn: maps must be >= 1");
    CnnBaselineModel m;
    m.maps = maps;
    Rng rng(seed);
    m.enc1 = make_conv(rng, 1, 64, 5, 0);
    m.enc2 = make_conv(rng, 64, maps, 5, 0);
    m.head.in = m.feature_dim();
    m.head.out = 10;
    m.head.w = Tensor({10, m.head.in});
    m.head.b.assign(10, 0.f);
    glorot_fill(rng, m.head.w.data, m.head.in, 10);
    return m;
}

TrainCurve train_scae(ScaeModel& model, const Tensor& images, int epochs, int batch,
                      std::uint64_t seed, const nn::AdadeltaParams& opt,
                      const EpochCallback& on_epoch) {
    check_images(images);
    const int n = images.dim(0);
    if (n == 0) throw std::invalid_argument("scae: empty training set");
    if (batch < 1) throw std::invalid_argument("scae: batch must be >= 1");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);

    GradBuf g_e1, g_e2, g_d1, g_d2;
    TrainCurve curve;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_data = 0.0, epoch_mse = 0.0, epoch_wpen = 0.0;
        int n_batches = 0;

        for (int start = 0; start < n; start += batch) {
            const int bsz = std::min(batch, n - start);
            g_e1.init_like_conv(model.enc1.w, model.enc1.b.size());
            g_e2.init_like_conv(model.enc2.w, model.enc2.b.size());
            g_d1.init_like_conv(model.dec1.w, model.dec1.b.size());
            g_d2.init_like_conv(model.dec2.w, model.dec2.b.size());
            double batch_data = 0.0;

            for (int bi = 0; bi < bsz; ++bi) {
                const Tensor x = as_image(images.row(order[start + bi]));

                Tensor a1 = conv2d_forward(model.enc1, x);
                Tensor r1 = a1;
                nn::relu_inplace(r1);
                Tensor a2 = conv2d_forward(model.enc2, r1);
                Tensor r2 = a2;
                nn::relu_inplace(r2);
                auto pool = nn::maxpool_forward(r2, 5, 5);
                Tensor up = nn::upsample_forward(pool.y, 5);
                Tensor a3 = deconv2d_forward(model.dec1, up);
                Tensor r3 = a3;
                nn::relu_inplace(r3);
                Tensor a4 = deconv2d_forward(model.dec2, r3);
                Tensor out = a4;
                nn::sigmoid_inplace(out);

                Tensor g_out;
                const double sample_mse = nn::mse(out, x, &g_out);
                Tensor g_r2_extra(r2.shape);  // activity subgradient
                const double act_pen =
                    nn::l1_activity_penalty(r2, model.lambda_a, &g_r2_extra);
                batch_data += sample_mse + act_pen;
                epoch_mse += sample_mse;

                Tensor g_a4 = nn::sigmoid_backward(out, g_out);
                auto gd2 = deconv2d_backward(model.dec2, r3, g_a4);
                Tensor g_a3 = nn::relu_backward(a3, gd2.input);
                auto gd1 = deconv2d_backward(model.dec1, up, g_a3);
                Tensor g_code = nn::upsample_backward(gd1.input, 5);
                Tensor g_r2 = nn::maxpool_backward(g_code, pool.argmax, r2.shape);
                for (std::size_t i = 0; i < g_r2.numel(); ++i)
                    g_r2.data[i] += g_r2_extra.data[i];
                Tensor g_a2 = nn::relu_backward(a2, g_r2);
                auto ge2 = conv2d_backward(model.enc2, r1, g_a2);
                Tensor g_a1 = nn::relu_backward(a1, ge2.input);
                auto ge1 = conv2d_backward(model.enc1, x, g_a1);

                g_e1.add(ge1.weight, ge1.bias);
                g_e2.add(ge2.weight, ge2.bias);
                g_d1.add(gd1.weight, gd1.bias);
                g_d2.add(gd2.weight, gd2.bias);
            }

            const float inv_b = 1.0f / float(bsz);
            g_e1.scale(inv_b);
            g_e2.scale(inv_b);
            g_d1.scale(inv_b);
            g_d2.scale(inv_b);

            double wpen = 0.0;
            wpen += nn::l2_weight_penalty(model.enc1.w, model.lambda_w, &g_e1.w);
            wpen += nn::l2_weight_penalty(model.enc2.w, model.lambda_w, &g_e2.w);
            wpen += nn::l2_weight_penalty(model.dec1.w, model.lambda_w, &g_d1.w);
            wpen += nn::l2_weight_penalty(model.dec2.w, model.lambda_w, &g_d2.w);

            const double batch_loss = batch_data / bsz + wpen;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("scae: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / batch));
            epoch_data += batch_data;
            epoch_wpen += wpen;
            ++n_batches;

            adadelta_step<float>(model.enc1.w.data, g_e1.w.data, model.st_enc1_w, opt);
            adadelta_step<float>(model.enc1.b, g_e1.b, model.st_enc1_b, opt);
            adadelta_step<float>(model.enc2.w.data, g_e2.w.data, model.st_enc2_w, opt);
            adadelta_step<float>(model.enc2.b, g_e2.b, model.st_enc2_b, opt);
            adadelta_step<float>(model.dec1.w.data, g_d1.w.data, model.st_dec1_w, opt);
            adadelta_step<float>(model.dec1.b, g_d1.b, model.st_dec1_b, opt);
            adadelta_step<float>(model.dec2.w.data, g_d2.w.data, model.st_dec2_w, opt);
            adadelta_step<float>(model.dec2.b, g_d2.b, model.st_dec2_b, opt);
        }

        curve.total_loss.push_back(epoch_data / n + epoch_wpen / n_batches);
        curve.recon_mse.push_back(epoch_mse / n);
        if (on_epoch) on_epoch(epoch, curve.total_loss.back());
    }
    return curve;
}

namespace {

Tensor encode_one(const nn::Conv2d<float>& enc1, const nn::Conv2d<float>& enc2,
                  std::span<const float> image) {
    Tensor x = as_image(image);
    Tensor a1 = conv2d_forward(enc1, x);
    nn::relu_inplace(a1);
    Tensor a2 = conv2d_forward(enc2, a1);
    nn::relu_inplace(a2);
    return nn::maxpool_forward(a2, 5, 5).y;
}

}  // namespace

Tensor scae_extract(const ScaeModel& model, const Tensor& images) {
    check_images(images);
    const int n = images.dim(0);
    Tensor out({n, model.code_dim()});
    for (int i = 0; i < n; ++i) {
        const Tensor code = encode_one(model.enc1, model.enc2, images.row(i));
        std::copy(code.data.begin(), code.data.end(),
                  out.data.begin() + std::size_t(i) * model.code_dim());
    }
    return out;
}

double mean_abs_code(const ScaeModel& model, const Tensor& images) {
    check_images(images);
    const int n = images.dim(0);
    double total = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < n; ++i) {
        Tensor x = as_image(images.row(i));
        Tensor a1 = conv2d_forward(model.enc1, x);
        nn::relu_inplace(a1);
        Tensor a2 = conv2d_forward(model.enc2, a1);
        nn::relu_inplace(a2);
        for (const float v : a2.data) total += std::abs(double(v));
        count += a2.numel();
    }
    return total / double(count);
}

Tensor scae_reconstruct(const ScaeModel& model, std::span<const float> image) {
    Tensor code = encode_one(model.enc1, model.enc2, image);
    Tensor up = nn::upsample_forward(code, 5);
    Tensor a3 = deconv2d_forward(model.dec1, up);
    nn::relu_inplace(a3);
    Tensor a4 = deconv2d_forward(model.dec2, a3);
    nn::sigmoid_inplace(a4);
    return a4;
}

TrainCurve train_cnn_baseline(CnnBaselineModel& model, const Tensor& images,
                              const std::vector<std::uint8_t>& labels, int epochs,
                              int batch, std::uint64_t seed,
                              const nn::AdadeltaParams& opt,
                              const EpochCallback& on_epoch) {
    check_images(images);
    const int n = images.dim(0);
    if (n == 0) throw std::invalid_argument("cnn: empty training set");
    if (static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("cnn: image/label count mismatch");
    if (batch < 1) throw std::invalid_argument("cnn: batch must be >= 1");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);

    GradBuf g_e1, g_e2, g_h;
    TrainCurve curve;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;

        for (int start = 0; start < n; start += batch) {
            const int bsz = std::min(batch, n - start);
            g_e1.init_like_conv(model.enc1.w, model.enc1.b.size());
            g_e2.init_like_conv(model.enc2.w, model.enc2.b.size());
            g_h.init_like_conv(model.head.w, model.head.b.size());
            double batch_loss = 0.0;

            for (int bi = 0; bi < bsz; ++bi) {
                const int idx = order[start + bi];
                const Tensor x = as_image(images.row(idx));

                Tensor a1 = conv2d_forward(model.enc1, x);
                Tensor r1 = a1;
                nn::relu_inplace(r1);
                Tensor a2 = conv2d_forward(model.enc2, r1);
                Tensor r2 = a2;
                nn::relu_inplace(r2);
                auto pool = nn::maxpool_forward(r2, 5, 5);
                Tensor flat({model.head.in});
                flat.data = pool.y.data;
                Tensor logits = dense_forward(model.head, flat);

                Tensor g_logits;
                batch_loss +=
                    nn::softmax_crossentropy(logits, labels[idx], &g_logits);

                auto gh = dense_backward(model.head, flat, g_logits);
                Tensor g_pool(pool.y.shape);
                g_pool.data = gh.input.data;
                Tensor g_r2 = nn::maxpool_backward(g_pool, pool.argmax, r2.shape);
                Tensor g_a2 = nn::relu_backward(a2, g_r2);
                auto ge2 = conv2d_backward(model.enc2, r1, g_a2);
                Tensor g_a1 = nn::relu_backward(a1, ge2.input);
                auto ge1 = conv2d_backward(model.enc1, x, g_a1);

                g_e1.add(ge1.weight, ge1.bias);
                g_e2.add(ge2.weight, ge2.bias);
                g_h.add(gh.weight, gh.bias);
            }

            if (!std::isfinite(batch_loss))
                throw std::runtime_error("cnn: non-finite loss at epoch " +
                                         std::to_string(epoch));
            const float inv_b = 1.0f / float(bsz);
            g_e1.scale(inv_b);
            g_e2.scale(inv_b);
            g_h.scale(inv_b);
            epoch_loss += batch_loss;

            adadelta_step<float>(model.enc1.w.data, g_e1.w.data, model.st_enc1_w, opt);
            adadelta_step<float>(model.enc1.b, g_e1.b, model.st_enc1_b, opt);
            adadelta_step<float>(model.enc2.w.data, g_e2.w.data, model.st_enc2_w, opt);
            adadelta_step<float>(model.enc2.b, g_e2.b, model.st_enc2_b, opt);
            adadelta_step<float>(model.head.w.data, g_h.w.data, model.st_head_w, opt);
            adadelta_step<float>(model.head.b, g_h.b, model.st_head_b, opt);
        }

        curve.total_loss.push_back(epoch_loss / n);
        curve.recon_mse.push_back(0.0);
        if (on_epoch) on_epoch(epoch, curve.total_loss.back());
    }
    return curve;
}

Tensor cnn_extract(const CnnBaselineModel& model, const Tensor& images) {
    check_images(images);
    const int n = images.dim(0);
    Tensor out({n, model.feature_dim()});
    for (int i = 0; i < n; ++i) {
        const Tensor code = encode_one(model.enc1, model.enc2, images.row(i));
        std::copy(code.data.begin(), code.data.end(),
                  out.data.begin() + std::size_t(i) * model.feature_dim());
    }
    return out;
}

int cnn_predict(const CnnBaselineModel& model, std::span<const float> image) {
    Tensor code = encode_one(model.enc1, model.enc2, image);
    Tensor flat({model.head.in});
    flat.data = code.data;
    const Tensor logits = dense_forward(model.head, flat);
    int best = 0;
    for (int i = 1; i < 10; ++i)
        if (logits.data[i] > logits.data[best]) best = i;
    return best;
}

double cnn_accuracy(const CnnBaselineModel& model, const Tensor& images,
                    const std::vector<std::uint8_t>& labels) {
    check_images(images);
    const int n = images.dim(0);
    std::int64_t hits = 0;
    for (int i = 0; i < n; ++i)
        hits += (cnn_predict(model, images.row(i)) == labels[i]);
    return double(hits) / double(n);
}

// --- checkpoints ---------------------------------------------------------

namespace {

constexpr std::uint32_t kModelMagic = 0x534c4e4e;  // "SLNN"
constexpr std::uint32_t kModelVersion = 1;

void put_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void get_bytes(std::ifstream& f, void* p, std::size_t n) {
    if (!f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n)))
        throw std::runtime_error("model checkpoint: truncated");
}
template <typename T>
void put_pod(std::ofstream& f, const T& v) { put_bytes(f, &v, sizeof(T)); }
template <typename T>
void get_pod(std::ifstream& f, T& v) { get_bytes(f, &v, sizeof(T)); }

void put_vec(std::ofstream& f, const std::vector<float>& v) {
    put_pod(f, std::uint64_t(v.size()));
    put_bytes(f, v.data(), v.size() * sizeof(float));
}
void get_vec(std::ifstream& f, std::vector<float>& v) {
    std::uint64_t n = 0;
    get_pod(f, n);
    v.resize(n);
    get_bytes(f, v.data(), n * sizeof(float));
}
void put_str(std::ofstream& f, const std::string& s) {
    put_pod(f, std::uint32_t(s.size()));
    put_bytes(f, s.data(), s.size());
}
std::string get_str(std::ifstream& f) {
    std::uint32_t n = 0;
    get_pod(f, n);
    std::string s(n, '\0');
    get_bytes(f, s.data(), n);
    return s;
}
void put_state(std::ofstream& f, const nn::AdadeltaState<float>& st) {
    put_vec(f, st.eg2);
    put_vec(f, st.edx2);
}
void get_state(std::ifstream& f, nn::AdadeltaState<float>& st) {
    get_vec(f, st.eg2);
    get_vec(f, st.edx2);
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("model checkpoint: cannot open " + p.string());
    return f;
}
std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("model checkpoint: cannot open " + p.string());
    return f;
}

void check_header(std::ifstream& f, std::uint8_t expect_kind) {
    std::uint32_t magic = 0, version = 0;
    std::uint8_t kind = 0;
    get_pod(f, magic);
    get_pod(f, version);
    get_pod(f, kind);
    if (magic != kModelMagic) throw std::runtime_error("model checkpoint: bad magic");
    if (version != kModelVersion)
        throw std::runtime_error("model checkpoint: unsupported version");
    if (kind != expect_kind)
        throw std::runtime_error("model checkpoint: wrong model kind");
}

}  // namespace

void save_scae(const std::filesystem::path& path, const ScaeModel& m) {
    auto f = open_out(path);
    put_pod(f, kModelMagic);
    put_pod(f, kModelVersion);
    put_pod(f, std::uint8_t(0));
    put_str(f, m.topology());
    put_pod(f, std::int32_t(m.maps));
    put_pod(f, m.lambda_w);
    put_pod(f, m.lambda_a);
    put_vec(f, m.enc1.w.data);
    put_vec(f, m.enc1.b);
    put_vec(f, m.enc2.w.data);
    put_vec(f, m.enc2.b);
    put_vec(f, m.dec1.w.data);
    put_vec(f, m.dec1.b);
    put_vec(f, m.dec2.w.data);
    put_vec(f, m.dec2.b);
    for (const auto* st : {&m.st_enc1_w, &m.st_enc1_b, &m.st_enc2_w, &m.st_enc2_b,
                           &m.st_dec1_w, &m.st_dec1_b, &m.st_dec2_w, &m.st_dec2_b})
        put_state(f, *st);
    if (!f) throw std::runtime_error("model checkpoint: write failed");
}

ScaeModel load_scae(const std::filesystem::path& path) {
    auto f = open_in(path);
    check_header(f, 0);
    (void)get_str(f);
    std::int32_t maps = 0;
    float lw = 0, la = 0;
    get_pod(f, maps);
    get_pod(f, lw);
    get_pod(f, la);
    ScaeModel m = make_scae(maps, 0, lw, la);
    get_vec(f, m.enc1.w.data);
    get_vec(f, m.enc1.b);
    get_vec(f, m.enc2.w.data);
    get_vec(f, m.enc2.b);
    get_vec(f, m.dec1.w.data);
    get_vec(f, m.dec1.b);
    get_vec(f, m.dec2.w.data);
    get_vec(f, m.dec2.b);
    for (auto* st : {&m.st_enc1_w, &m.st_enc1_b, &m.st_enc2_w, &m.st_enc2_b,
                     &m.st_dec1_w, &m.st_dec1_b, &m.st_dec2_w, &m.st_dec2_b})
        get_state(f, *st);
    return m;
}

void save_cnn(const std::filesystem::path& path, const CnnBaselineModel& m) {
    auto f = open_out(path);
    put_pod(f, kModelMagic);
    put_pod(f, kModelVersion);
    put_pod(f, std::uint8_t(1));
    put_str(f, m.topology());
    put_pod(f, std::int32_t(m.maps));
    put_vec(f, m.enc1.w.data);
    put_vec(f, m.enc1.b);
    put_vec(f, m.enc2.w.data);
    put_vec(f, m.enc2.b);
    put_vec(f, m.head.w.data);
    put_vec(f, m.head.b);
    for (const auto* st : {&m.st_enc1_w, &m.st_enc1_b, &m.st_enc2_w, &m.st_enc2_b,
                           &m.st_head_w, &m.st_head_b})
        put_state(f, *st);
    if (!f) throw std::runtime_error("model checkpoint: write failed");
}

CnnBaselineModel load_cnn(const std::filesystem::path& path) {
    auto f = open_in(path);
    check_header(f, 1);
    (void)get_str(f);
    std::int32_t maps = 0;
    get_pod(f, maps);
    CnnBaselineModel m = make_cnn_baseline(maps, 0);
    get_vec(f, m.enc1.w.data);
    get_vec(f, m.enc1.b);
    get_vec(f, m.enc2.w.data);
    get_vec(f, m.enc2.b);
    get_vec(f, m.head.w.data);
    get_vec(f, m.head.b);
    for (auto* st : {&m.st_enc1_w, &m.st_enc1_b, &m.st_enc2_w, &m.st_enc2_b,
                     &m.st_head_w, &m.st_head_b})
        get_state(f, *st);
    return m;
}

}  // namespace somlab
