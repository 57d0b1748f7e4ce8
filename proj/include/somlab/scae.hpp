#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "somlab/nn/adadelta.hpp"
#include "somlab/nn/ops.hpp"
#include "somlab/tensor.hpp"

namespace somlab {

// Reported once per epoch during gradient training.
using EpochCallback = std::function<void(int epoch, double loss)>;

struct TrainCurve {
    std::vector<double> total_loss;  // data loss + penalties, mean per epoch
    std::vector<double> recon_mse;   // reconstruction term alone
};

// Encoder 1->64->X conv (5x5, valid) + 5x5/5 max-pool; decoder mirrors it
// with x5 up-sampling and two transposed convolutions back to 1x28x28.
struct ScaeModel {
    int maps = 256;  // X
    nn::Conv2d<float> enc1, enc2;
    nn::Deconv2d<float> dec1, dec2;
    float lambda_w = 1e-4f;
    float lambda_a = 1e-4f;

    nn::AdadeltaState<float> st_enc1_w, st_enc1_b, st_enc2_w, st_enc2_b;
    nn::AdadeltaState<float> st_dec1_w, st_dec1_b, st_dec2_w, st_dec2_b;

    std::size_t param_count() const {
        return enc1.param_count() + enc2.param_count() + dec1.param_count() +
               dec2.param_count();
    }
    int code_dim() const { return maps * 4 * 4; }
    std::string topology() const {
        return "64c5-" + std::to_string(maps) + "c5-p5-u5-64d5-1d5";
    }
};

// Same trunk as the SCAE encoder with a 10-way softmax head.
struct CnnBaselineModel {
    int maps = 256;
    nn::Conv2d<float> enc1, enc2;
    nn::Dense<float> head;

    nn::AdadeltaState<float> st_enc1_w, st_enc1_b, st_enc2_w, st_enc2_b;
    nn::AdadeltaState<float> st_head_w, st_head_b;

    std::size_t param_count() const {
        return enc1.param_count() + enc2.param_count() + head.param_count();
    }
    int feature_dim() const { return maps * 4 * 4; }
    std::string topology() const {
        return "64c5-" + std::to_string(maps) + "c5-p5-mlp10";
    }
};

ScaeModel make_scae(int maps, std::uint64_t seed, float lambda_w = 1e-4f,
                    float lambda_a = 1e-4f);
CnnBaselineModel make_cnn_baseline(int maps, std::uint64_t seed);

// Unsupervised reconstruction training (labels never enter the interface):
// per-sample loss = pixel-mean MSE + lambda_a * sum|code activations|, plus
// lambda_w * sum(w^2) over all conv/deconv kernels per batch. Adadelta.
TrainCurve train_scae(ScaeModel& model, const Tensor& images, int epochs, int batch,
                      std::uint64_t seed, const nn::AdadeltaParams& opt = {},
                      const EpochCallback& on_epoch = nullptr);

// Flattened encoder codes (post-pool), {N, maps*16}; the decoder is not run.
Tensor scae_extract(const ScaeModel& model, const Tensor& images);

// Mean |activation| of the code layer over a set of images (sparsity probe).
double mean_abs_code(const ScaeModel& model, const Tensor& images);

// Reconstruction of one image (for inspection and tests).
Tensor scae_reconstruct(const ScaeModel& model, std::span<const float> image);

TrainCurve train_cnn_baseline(CnnBaselineModel& model, const Tensor& images,
                              const std::vector<std::uint8_t>& labels, int epochs,
                              int batch, std::uint64_t seed,
                              const nn::AdadeltaParams& opt = {},
                              const EpochCallback& on_epoch = nullptr);

Tensor cnn_extract(const CnnBaselineModel& model, const Tensor& images);

int cnn_predict(const CnnBaselineModel& model, std::span<const float> image);
double cnn_accuracy(const CnnBaselineModel& model, const Tensor& images,
                    const std::vector<std::uint8_t>& labels);

// Versioned binary checkpoints (topology string + parameters + optimizer state).
void save_scae(const std::filesystem::path& path, const ScaeModel& model);
ScaeModel load_scae(const std::filesystem::path& path);
void save_cnn(const std::filesystem::path& path, const CnnBaselineModel& model);
CnnBaselineModel load_cnn(const std::filesystem::path& path);

}  // namespace somlab
