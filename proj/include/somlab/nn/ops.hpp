#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "somlab/gemm.hpp"
#include "somlab/tensor.hpp"

// Dense single-sample ops on {C,H,W} tensors, stride 1, mirrored backward
// passes. Convolutions run as im2col + GEMM; transposed convolutions reuse
// the same machinery through the adjoint relationship.
namespace somlab::nn {

template <typename T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 0, pad = 0;  // pad 0 = valid, (k-1)/2 = same
    TensorT<T> w;        // {out_ch, in_ch, k, k}
    std::vector<T> b;    // out_ch

    std::size_t param_count() const { return w.numel() + b.size(); }
};

// Transposed convolution; maps {in_ch,h,w} -> {out_ch, h+k-1-2*pad, ...}.
template <typename T>
struct Deconv2d {
    int in_ch = 0, out_ch = 0, k = 0, pad = 0;
    TensorT<T> w;        // {in_ch, out_ch, k, k}
    std::vector<T> b;    // out_ch

    std::size_t param_count() const { return w.numel() + b.size(); }
};

template <typename T>
struct Dense {
    int in = 0, out = 0;
    TensorT<T> w;        // {out, in}
    std::vector<T> b;    // out

    std::size_t param_count() const { return w.numel() + b.size(); }
};

inline int conv_out_dim(int in, int k, int pad) { return in + 2 * pad - k + 1; }

namespace detail {

template <typename T>
void check_chw(const TensorT<T>& x, int ch, const char* who) {
    if (x.shape.size() != 3 || x.dim(0) != ch)
        throw std::invalid_argument(std::string(who) + ": expected {" +
                                    std::to_string(ch) + ",H,W}, got " +
                                    shape_str(x.shape));
}

// col is (C*k*k) x (oh*ow); column j holds the receptive field of output j.
template <typename T>
void im2col(const T* x, int ch, int h, int w, int k, int pad, T* col) {
    const int oh = conv_out_dim(h, k, pad);
    const int ow = conv_out_dim(w, k, pad);
    const int ocols = oh * ow;
    for (int c = 0; c < ch; ++c) {
        const T* plane = x + std::size_t(c) * h * w;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                T* dst = col + (std::size_t(c) * k * k + dy * k + dx) * ocols;
                for (int y = 0; y < oh; ++y) {
                    const int sy = y + dy - pad;
                    if (sy < 0 || sy >= h) {
                        for (int x2 = 0; x2 < ow; ++x2) dst[y * ow + x2] = T(0);
                        continue;
                    }
                    const T* src = plane + std::size_t(sy) * w;
                    for (int x2 = 0; x2 < ow; ++x2) {
                        const int sx = x2 + dx - pad;
                        dst[y * ow + x2] = (sx >= 0 && sx < w) ? src[sx] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* col, int ch, int h, int w, int k, int pad, T* x) {
    const int oh = conv_out_dim(h, k, pad);
    const int ow = conv_out_dim(w, k, pad);
    const int ocols = oh * ow;
    std::fill(x, x + std::size_t(ch) * h * w, T(0));
    for (int c = 0; c < ch; ++c) {
        T* plane = x + std::size_t(c) * h * w;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                const T* src = col + (std::size_t(c) * k * k + dy * k + dx) * ocols;
                for (int y = 0; y < oh; ++y) {
                    const int sy = y + dy - pad;
                    if (sy < 0 || sy >= h) continue;
                    T* dst = plane + std::size_t(sy) * w;
                    for (int x2 = 0; x2 < ow; ++x2) {
                        const int sx = x2 + dx - pad;
                        if (sx >= 0 && sx < w) dst[sx] += src[y * ow + x2];
                    }
                }
            }
        }
    }
}

template <typename T>
std::vector<T>& scratch(int which) {
    thread_local std::vector<T> bufs[3];
    return bufs[which];
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d_forward(const Conv2d<T>& layer, const TensorT<T>& x) {
    detail::check_chw(x, layer.in_ch, "conv2d");
    const int h = x.dim(1), w = x.dim(2), k = layer.k, pad = layer.pad;
    const int oh = conv_out_dim(h, k, pad), ow = conv_out_dim(w, k, pad);
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: kernel larger than input");

    auto& col = detail::scratch<T>(0);
    col.resize(std::size_t(layer.in_ch) * k * k * oh * ow);
    detail::im2col(x.ptr(), layer.in_ch, h, w, k, pad, col.data());

    TensorT<T> y({layer.out_ch, oh, ow});
    gemm(false, false, layer.out_ch, oh * ow, layer.in_ch * k * k, T(1),
         layer.w.ptr(), col.data(), T(0), y.ptr());
    for (int o = 0; o < layer.out_ch; ++o) {
        T* row = y.ptr() + std::size_t(o) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) row[i] += layer.b[o];
    }
    return y;
}

template <typename T>
struct ConvGrads {
    TensorT<T> input;   // dL/dx
    TensorT<T> weight;  // dL/dW
    std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Conv2d<T>& layer, const TensorT<T>& x,
                             const TensorT<T>& gy) {
    detail::check_chw(x, layer.in_ch, "conv2d backward");
    detail::check_chw(gy, layer.out_ch, "conv2d backward (grad)");
    const int h = x.dim(1), w = x.dim(2), k = layer.k, pad = layer.pad;
    const int oh = conv_out_dim(h, k, pad), ow = conv_out_dim(w, k, pad);
    if (gy.dim(1) != oh || gy.dim(2) != ow)
        throw std::invalid_argument("conv2d backward: upstream shape mismatch");

    ConvGrads<T> g;
    g.bias.assign(layer.out_ch, T(0));
    for (int o = 0; o < layer.out_ch; ++o) {
        const T* row = gy.ptr() + std::size_t(o) * oh * ow;
        T s = T(0);
        for (int i = 0; i < oh * ow; ++i) s += row[i];
        g.bias[o] = s;
    }

    auto& col = detail::scratch<T>(0);
    col.resize(std::size_t(layer.in_ch) * k * k * oh * ow);
    detail::im2col(x.ptr(), layer.in_ch, h, w, k, pad, col.data());

    g.weight = TensorT<T>({layer.out_ch, layer.in_ch, k, k});
    gemm(false, true, layer.out_ch, layer.in_ch * k * k, oh * ow, T(1), gy.ptr(),
         col.data(), T(0), g.weight.ptr());

    auto& gcol = detail::scratch<T>(1);
    gcol.resize(col.size());
    gemm(true, false, layer.in_ch * k * k, oh * ow, layer.out_ch, T(1),
         layer.w.ptr(), gy.ptr(), T(0), gcol.data());
    g.input = TensorT<T>({layer.in_ch, h, w});
    detail::col2im(gcol.data(), layer.in_ch, h, w, k, pad, g.input.ptr());
    return g;
}

template <typename T>
TensorT<T> deconv2d_forward(const Deconv2d<T>& layer, const TensorT<T>& x) {
    detail::check_chw(x, layer.in_ch, "deconv2d");
    const int h = x.dim(1), w = x.dim(2), k = layer.k, pad = layer.pad;
    const int oh = h + k - 1 - 2 * pad, ow = w + k - 1 - 2 * pad;
    if (oh < 1 || ow < 1) throw std::invalid_argument("deconv2d: output collapses");

    // Adjoint of a valid conv {out_ch,oh,ow} -> {in_ch,h,w} with the same kernels.
    auto& gcol = detail::scratch<T>(1);
    gcol.resize(std::size_t(layer.out_ch) * k * k * h * w);
    gemm(true, false, layer.out_ch * k * k, h * w, layer.in_ch, T(1), layer.w.ptr(),
         x.ptr(), T(0), gcol.data());
    TensorT<T> y({layer.out_ch, oh, ow});
    detail::col2im(gcol.data(), layer.out_ch, oh, ow, k, pad, y.ptr());
    for (int o = 0; o < layer.out_ch; ++o) {
        T* row = y.ptr() + std::size_t(o) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) row[i] += layer.b[o];
    }
    return y;
}

template <typename T>
ConvGrads<T> deconv2d_backward(const Deconv2d<T>& layer, const TensorT<T>& x,
                               const TensorT<T>& gy) {
    detail::check_chw(x, layer.in_ch, "deconv2d backward");
    detail::check_chw(gy, layer.out_ch, "deconv2d backward (grad)");
    const int h = x.dim(1), w = x.dim(2), k = layer.k, pad = layer.pad;
    const int oh = h + k - 1 - 2 * pad, ow = w + k - 1 - 2 * pad;
    if (gy.dim(1) != oh || gy.dim(2) != ow)
        throw std::invalid_argument("deconv2d backward: upstream shape mismatch");

    ConvGrads<T> g;
    g.bias.assign(layer.out_ch, T(0));
    for (int o = 0; o < layer.out_ch; ++o) {
        const T* row = gy.ptr() + std::size_t(o) * oh * ow;
        T s = T(0);
        for (int i = 0; i < oh * ow; ++i) s += row[i];
        g.bias[o] = s;
    }

    auto& col = detail::scratch<T>(0);
    col.resize(std::size_t(layer.out_ch) * k * k * h * w);
    detail::im2col(gy.ptr(), layer.out_ch, oh, ow, k, pad, col.data());

    g.input = TensorT<T>({layer.in_ch, h, w});
    gemm(false, false, layer.in_ch, h * w, layer.out_ch * k * k, T(1), layer.w.ptr(),
         col.data(), T(0), g.input.ptr());

    g.weight = TensorT<T>({layer.in_ch, layer.out_ch, k, k});
    gemm(false, true, layer.in_ch, layer.out_ch * k * k, h * w, T(1), x.ptr(),
         col.data(), T(0), g.weight.ptr());
    return g;
}

template <typename T>
struct PoolResult {
    TensorT<T> y;
    std::vector<int> argmax;  // flat input index per output cell
};

// Non-overlapping when s == k; floor division sizes; ties keep the first
// (row-major) maximum.
template <typename T>
PoolResult<T> maxpool_forward(const TensorT<T>& x, int k, int s) {
    if (x.shape.size() != 3) throw std::invalid_argument("maxpool: expected {C,H,W}");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h < k || w < k) throw std::invalid_argument("maxpool: window larger than input");
    const int oh = (h - k) / s + 1, ow = (w - k) / s + 1;
    PoolResult<T> r;
    r.y = TensorT<T>({c, oh, ow});
    r.argmax.assign(std::size_t(c) * oh * ow, 0);
    for (int ci = 0; ci < c; ++ci) {
        const T* plane = x.ptr() + std::size_t(ci) * h * w;
        for (int y = 0; y < oh; ++y)
            for (int x2 = 0; x2 < ow; ++x2) {
                T best{};
                int best_idx = -1;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) {
                        const int idx = (y * s + dy) * w + (x2 * s + dx);
                        if (best_idx < 0 || plane[idx] > best) {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                const std::size_t o = (std::size_t(ci) * oh + y) * ow + x2;
                r.y.data[o] = best;
                r.argmax[o] = ci * h * w + best_idx;
            }
    }
    return r;
}

template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& gy, const std::vector<int>& argmax,
                            const std::vector<int>& in_shape) {
    TensorT<T> gx(in_shape);
    for (std::size_t i = 0; i < gy.numel(); ++i) gx.data[argmax[i]] += gy.data[i];
    return gx;
}

// Nearest-neighbor repetition by factor k.
template <typename T>
TensorT<T> upsample_forward(const TensorT<T>& x, int k) {
    if (k < 1) throw std::invalid_argument("upsample: factor must be >= 1");
    if (x.shape.size() != 3) throw std::invalid_argument("upsample: expected {C,H,W}");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    TensorT<T> y({c, h * k, w * k});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h * k; ++yy) {
            const T* src = x.ptr() + (std::size_t(ci) * h + yy / k) * w;
            T* dst = y.ptr() + (std::size_t(ci) * h * k + yy) * w * k;
            for (int xx = 0; xx < w * k; ++xx) dst[xx] = src[xx / k];
        }
    return y;
}

template <typename T>
TensorT<T> upsample_backward(const TensorT<T>& gy, int k) {
    const int c = gy.dim(0), hk = gy.dim(1), wk = gy.dim(2);
    TensorT<T> gx({c, hk / k, wk / k});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < hk; ++yy) {
            const T* src = gy.ptr() + (std::size_t(ci) * hk + yy) * wk;
            T* dst = gx.ptr() + (std::size_t(ci) * (hk / k) + yy / k) * (wk / k);
            for (int xx = 0; xx < wk; ++xx) dst[xx / k] += src[xx];
        }
    return gx;
}

template <typename T>
TensorT<T> dense_forward(const Dense<T>& layer, const TensorT<T>& x) {
    if (static_cast<int>(x.numel()) != layer.in)
        throw std::invalid_argument("dense: input size mismatch");
    TensorT<T> y({layer.out});
    gemm(false, false, layer.out, 1, layer.in, T(1), layer.w.ptr(), x.ptr(), T(0),
         y.ptr());
    for (int o = 0; o < layer.out; ++o) y.data[o] += layer.b[o];
    return y;
}

template <typename T>
ConvGrads<T> dense_backward(const Dense<T>& layer, const TensorT<T>& x,
                            const TensorT<T>& gy) {
    ConvGrads<T> g;
    g.bias.assign(gy.data.begin(), gy.data.end());
    g.weight = TensorT<T>({layer.out, layer.in});
    gemm(false, true, layer.out, layer.in, 1, T(1), gy.ptr(), x.ptr(), T(0),
         g.weight.ptr());
    g.input = TensorT<T>(x.shape);
    gemm(true, false, layer.in, 1, layer.out, T(1), layer.w.ptr(), gy.ptr(), T(0),
         g.input.ptr());
    return g;
}

template <typename T>
void relu_inplace(TensorT<T>& x) {
    for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

// gx = gy where the pre-activation was positive.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& pre, const TensorT<T>& gy) {
    TensorT<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.numel(); ++i)
        gx.data[i] = pre.data[i] > T(0) ? gy.data[i] : T(0);
    return gx;
}

template <typename T>
void sigmoid_inplace(TensorT<T>& x) {
    for (auto& v : x.data) v = T(1) / (T(1) + std::exp(-v));
}

// gx = gy * y * (1 - y), with y the sigmoid output.
template <typename T>
TensorT<T> sigmoid_backward(const TensorT<T>& y, const TensorT<T>& gy) {
    TensorT<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.numel(); ++i)
        gx.data[i] = gy.data[i] * y.data[i] * (T(1) - y.data[i]);
    return gx;
}

}  // namespace somlab::nn
