#include "somlab/gemm.hpp"

#include <Eigen/Core>

namespace somlab::nn {

namespace {

template <typename T>
using MapM =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using MapMut =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
               const T* a, const T* b, T beta, T* c) {
    MapMut<T> C(c, m, n);
    const auto run = [&](const auto& A, const auto& B) {
        if (beta == T(0))
            C.noalias() = alpha * (A * B);
        else {
            C *= beta;
            C.noalias() += alpha * (A * B);
        }
    };
    if (!trans_a && !trans_b)
        run(MapM<T>(a, m, k), MapM<T>(b, k, n));
    else if (trans_a && !trans_b)
        run(MapM<T>(a, k, m).transpose(), MapM<T>(b, k, n));
    else if (!trans_a && trans_b)
        run(MapM<T>(a, m, k), MapM<T>(b, n, k).transpose());
    else
        run(MapM<T>(a, k, m).transpose(), MapM<T>(b, n, k).transpose());
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, const float* b, float beta, float* c) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
}

}  // namespace somlab::nn
