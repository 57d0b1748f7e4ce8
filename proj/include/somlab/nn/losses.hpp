#pragma once

#include <cmath>
#include <stdexcept>

#include "somlab/tensor.hpp"

namespace somlab::nn {

// Mean squared error over all elements; gradient with respect to `pred`.
template <typename T>
T mse(const TensorT<T>& pred, const TensorT<T>& target, TensorT<T>* grad = nullptr) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse: shape mismatch");
    const T inv_n = T(1) / T(pred.numel());
    T loss = T(0);
    if (grad) *grad = TensorT<T>(pred.shape);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const T d = pred.data[i] - target.data[i];
        loss += d * d;
        if (grad) grad->data[i] = T(2) * d * inv_n;
    }
    return loss * inv_n;
}

// Max-shifted softmax cross-entropy against an integer class target.
template <typename T>
T softmax_crossentropy(const TensorT<T>& logits, int cls, TensorT<T>* grad = nullptr) {
    const int n = static_cast<int>(logits.numel());
    if (cls < 0 || cls >= n)
        throw std::invalid_argument("softmax_crossentropy: class out of range");
    T mx = logits.data[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits.data[i]);
    T z = T(0);
    for (int i = 0; i < n; ++i) z += std::exp(logits.data[i] - mx);
    const T log_z = std::log(z);
    if (grad) {
        *grad = TensorT<T>(logits.shape);
        for (int i = 0; i < n; ++i)
            grad->data[i] = std::exp(logits.data[i] - mx) / z - (i == cls ? T(1) : T(0));
    }
    return log_z - (logits.data[cls] - mx);
}

template <typename T>
void softmax_inplace(TensorT<T>& logits) {
    T mx = logits.data[0];
    for (const auto v : logits.data) mx = std::max(mx, v);
    T z = T(0);
    for (auto& v : logits.data) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : logits.data) v /= z;
}

// L2 weight penalty: returns lambda*sum(w^2) and adds 2*lambda*w to grad.
template <typename T>
T l2_weight_penalty(const TensorT<T>& w, T lambda, TensorT<T>* grad = nullptr) {
    T s = T(0);
    for (std::size_t i = 0; i < w.numel(); ++i) {
        s += w.data[i] * w.data[i];
        if (grad) grad->data[i] += T(2) * lambda * w.data[i];
    }
    return lambda * s;
}

// L1 activity penalty: returns lambda*sum(|a|) and adds the subgradient
// lambda*sign(a) (sign(0) = 0) scaled by `grad_scale` to grad.
template <typename T>
T l1_activity_penalty(const TensorT<T>& a, T lambda, TensorT<T>* grad = nullptr,
                      T grad_scale = T(1)) {
    T s = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const T v = a.data[i];
        s += std::abs(v);
        if (grad && v != T(0))
            grad->data[i] += grad_scale * lambda * (v > T(0) ? T(1) : T(-1));
    }
    return lambda * s;
}

}  // namespace somlab::nn
