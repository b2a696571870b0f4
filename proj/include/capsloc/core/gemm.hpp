#pragma once

#include <cstdlib>

#ifndef CAPSLOC_NO_CBLAS
#include <cblas.h>
#endif

namespace capsloc {

#ifndef CAPSLOC_NO_CBLAS

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

/// Pins BLAS to one thread so reductions happen in a fixed order. Call once
/// at process start, before the first GEMM.
inline void use_single_threaded_blas() {
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  if (openblas_set_num_threads) openblas_set_num_threads(1);
}

/// C[m,n] (+)= A[m,k] * B[k,n], row-major. beta 0 overwrites, 1 accumulates.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

#else

inline void use_single_threaded_blas() {}

/// Reference GEMM for builds without CBLAS.
template <class T>
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
                 const T* a, int lda, const T* b, int ldb, T beta, T* c,
                 int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        T bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
    }
  }
}

#endif

}  // namespace capsloc
