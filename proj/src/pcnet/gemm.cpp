#include "pcnet/gemm.hpp"

#include <cblas.h>

namespace pcnet::detail {

namespace {
struct SingleThreadedBlas {
  // Pins the reduction order so results do not depend on the host's core count.
  SingleThreadedBlas() { openblas_set_num_threads(1); }
};
const SingleThreadedBlas kSingleThreaded;

inline int lead(bool trans, std::size_t rows, std::size_t cols) {
  return static_cast<int>(trans ? rows : cols);
}
}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              lead(trans_a, m, k), b, lead(trans_b, k, n), beta, c, static_cast<int>(n));
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              lead(trans_a, m, k), b, lead(trans_b, k, n), beta, c, static_cast<int>(n));
}

}  // namespace pcnet::detail
