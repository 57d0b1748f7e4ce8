#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace somlab::nn {

struct AdadeltaParams {
    double rho = 0.95;   // decay of both moving averages
    double eps = 1e-7;   // numerical floor inside the RMS terms
    double lr = 1.0;

    void validate() const {
        if (!(rho > 0.0 && rho < 1.0))
            throw std::invalid_argument("adadelta: rho must be in (0,1)");
        if (!(eps > 0.0)) throw std::invalid_argument("adadelta: eps must be positive");
    }
};

// Per-parameter moving averages of squared gradients and squared updates.
template <typename T>
struct AdadeltaState {
    std::vector<T> eg2;
    std::vector<T> edx2;

    void init(std::size_t n) {
        eg2.assign(n, T(0));
        edx2.assign(n, T(0));
    }
    bool empty() const { return eg2.empty(); }
};

// x += lr * dx with dx = -(RMS[dx]/RMS[g]) * g, RMS[z] = sqrt(E[z^2] + eps).
template <typename T>
void adadelta_step(std::span<T> params, std::span<const T> grads,
                   AdadeltaState<T>& state, const AdadeltaParams& hp) {
    hp.validate();
    if (params.size() != grads.size())
        throw std::invalid_argument("adadelta: param/grad size mismatch");
    if (state.empty()) state.init(params.size());
    if (state.eg2.size() != params.size())
        throw std::invalid_argument("adadelta: state size mismatch");

    const T rho = T(hp.rho), eps = T(hp.eps), lr = T(hp.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        if (!std::isfinite(g)) throw std::runtime_error("adadelta: non-finite gradient");
        state.eg2[i] = rho * state.eg2[i] + (T(1) - rho) * g * g;
        const T dx = -std::sqrt((state.edx2[i] + eps) / (state.eg2[i] + eps)) * g;
        state.edx2[i] = rho * state.edx2[i] + (T(1) - rho) * dx * dx;
        params[i] += lr * dx;
    }
}

}  // namespace somlab::nn
