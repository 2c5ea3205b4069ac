#pragma once

#include <cstddef>

namespace pcnet::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C, backed by cblas.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

}  // namespace pcnet::detail
