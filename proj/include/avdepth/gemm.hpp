#pragma once

#include <cstddef>

namespace avdepth {

// Row-major f64 matrix kernels. Every output element is accumulated by a
// single fixed-order summation, so results are reproducible run to run and
// independent of tiling. "acc" adds into C instead of overwriting it.

/// C[M x N] = A[M x K] * B[K x N]. Per-element sum runs over k ascending.
void gemm_nn(int M, int N, int K,
             const double* A, int lda,
             const double* B, int ldb,
             double* C, int ldc, bool acc);

/// C[M x N] = A^T * B with A stored [P x M], B stored [P x N].
void gemm_tn(int M, int N, int P,
             const double* A, int lda,
             const double* B, int ldb,
             double* C, int ldc, bool acc);

/// C[M x N] = A * B^T with A stored [M x P], B stored [N x P].
void gemm_nt(int M, int N, int P,
             const double* A, int lda,
             const double* B, int ldb,
             double* C, int ldc, bool acc);

} // namespace avdepth
