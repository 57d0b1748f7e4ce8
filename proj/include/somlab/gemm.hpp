#pragma once

namespace somlab::nn {

// C = alpha * op(A) * op(B) + beta * C, row-major, op = optional transpose.
// A is MxK after op, B is KxN after op, C is MxN.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, const float* b, float beta, float* c);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c);

}  // namespace somlab::nn
