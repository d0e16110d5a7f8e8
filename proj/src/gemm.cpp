#include "avdepth/gemm.hpp"

#include <cstddef>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

// Each C element is produced by one fixed-order summation over the inner
// dimension, so results do not depend on tile traversal and are identical
// across runs. Vector lanes hold distinct C elements; lane width never
// changes the per-element order.

namespace avdepth {
namespace {

constexpr int NR = 16;

inline void edge_dot(int m, int n, int K, const double* A, int lda,
                     const double* B, int ldb, double* C, int ldc, bool acc,
                     bool a_transposed) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            if (a_transposed) {
                for (int k = 0; k < K; ++k)
                    s += A[static_cast<size_t>(k) * lda + i] * B[static_cast<size_t>(k) * ldb + j];
            } else {
                for (int k = 0; k < K; ++k)
                    s += A[static_cast<size_t>(i) * lda + k] * B[static_cast<size_t>(k) * ldb + j];
            }
            double* cp = C + static_cast<size_t>(i) * ldc + j;
            *cp = acc ? *cp + s : s;
        }
    }
}

#if defined(__AVX512F__)

template <int mr, bool a_transposed>
inline void tile16(int K, const double* A, int lda, const double* B, int ldb,
                   double* C, int ldc, bool acc) {
    __m512d c0[mr], c1[mr];
    for (int i = 0; i < mr; ++i) {
        c0[i] = _mm512_setzero_pd();
        c1[i] = _mm512_setzero_pd();
    }
    for (int k = 0; k < K; ++k) {
        const double* bk = B + static_cast<size_t>(k) * ldb;
        const __m512d b0 = _mm512_loadu_pd(bk);
        const __m512d b1 = _mm512_loadu_pd(bk + 8);
        for (int i = 0; i < mr; ++i) {
            const double av = a_transposed ? A[static_cast<size_t>(k) * lda + i]
                                           : A[static_cast<size_t>(i) * lda + k];
            const __m512d a = _mm512_set1_pd(av);
            c0[i] = _mm512_fmadd_pd(a, b0, c0[i]);
            c1[i] = _mm512_fmadd_pd(a, b1, c1[i]);
        }
    }
    for (int i = 0; i < mr; ++i) {
        double* crow = C + static_cast<size_t>(i) * ldc;
        if (acc) {
            c0[i] = _mm512_add_pd(_mm512_loadu_pd(crow), c0[i]);
            c1[i] = _mm512_add_pd(_mm512_loadu_pd(crow + 8), c1[i]);
        }
        _mm512_storeu_pd(crow, c0[i]);
        _mm512_storeu_pd(crow + 8, c1[i]);
    }
}

#elif defined(__AVX2__) && defined(__FMA__)

template <int mr, bool a_transposed>
inline void tile16(int K, const double* A, int lda, const double* B, int ldb,
                   double* C, int ldc, bool acc) {
    __m256d c[mr][4];
    for (int i = 0; i < mr; ++i)
        for (int v = 0; v < 4; ++v) c[i][v] = _mm256_setzero_pd();
    for (int k = 0; k < K; ++k) {
        const double* bk = B + static_cast<size_t>(k) * ldb;
        __m256d b[4];
        for (int v = 0; v < 4; ++v) b[v] = _mm256_loadu_pd(bk + 4 * v);
        for (int i = 0; i < mr; ++i) {
            const double av = a_transposed ? A[static_cast<size_t>(k) * lda + i]
                                           : A[static_cast<size_t>(i) * lda + k];
            const __m256d a = _mm256_set1_pd(av);
            for (int v = 0; v < 4; ++v) c[i][v] = _mm256_fmadd_pd(a, b[v], c[i][v]);
        }
    }
    for (int i = 0; i < mr; ++i) {
        double* crow = C + static_cast<size_t>(i) * ldc;
        for (int v = 0; v < 4; ++v) {
            if (acc) c[i][v] = _mm256_add_pd(_mm256_loadu_pd(crow + 4 * v), c[i][v]);
            _mm256_storeu_pd(crow + 4 * v, c[i][v]);
        }
    }
}

#else

template <int mr, bool a_transposed>
inline void tile16(int K, const double* A, int lda, const double* B, int ldb,
                   double* C, int ldc, bool acc) {
    double c[mr][NR] = {};
    for (int k = 0; k < K; ++k) {
        const double* bk = B + static_cast<size_t>(k) * ldb;
        for (int i = 0; i < mr; ++i) {
            const double a = a_transposed ? A[static_cast<size_t>(k) * lda + i]
                                          : A[static_cast<size_t>(i) * lda + k];
            for (int j = 0; j < NR; ++j) c[i][j] += a * bk[j];
        }
    }
    for (int i = 0; i < mr; ++i) {
        double* crow = C + static_cast<size_t>(i) * ldc;
        for (int j = 0; j < NR; ++j) crow[j] = acc ? crow[j] + c[i][j] : c[i][j];
    }
}

#endif

template <bool a_transposed>
void gemm_impl(int M, int N, int K, const double* A, int lda, const double* B,
               int ldb, double* C, int ldc, bool acc) {
    int j = 0;
    for (; j + NR <= N; j += NR) {
        const double* Bj = B + j;
        double* Cj = C + j;
        int i = 0;
        for (; i + 4 <= M; i += 4) {
            const double* Ai = a_transposed ? A + i : A + static_cast<size_t>(i) * lda;
            tile16<4, a_transposed>(K, Ai, lda, Bj, ldb, Cj + static_cast<size_t>(i) * ldc, ldc, acc);
        }
        const int mrem = M - i;
        const double* Ai = a_transposed ? A + i : A + static_cast<size_t>(i) * lda;
        double* Ci = Cj + static_cast<size_t>(i) * ldc;
        if (mrem == 3)
            tile16<3, a_transposed>(K, Ai, lda, Bj, ldb, Ci, ldc, acc);
        else if (mrem == 2)
            tile16<2, a_transposed>(K, Ai, lda, Bj, ldb, Ci, ldc, acc);
        else if (mrem == 1)
            tile16<1, a_transposed>(K, Ai, lda, Bj, ldb, Ci, ldc, acc);
    }
    if (j < N) {
        const double* Aj = A;
        edge_dot(M, N - j, K, Aj, lda, B + j, ldb, C + j, ldc, acc, a_transposed);
    }
}

} // namespace

void gemm_nn(int M, int N, int K, const double* A, int lda, const double* B,
             int ldb, double* C, int ldc, bool acc) {
    gemm_impl<false>(M, N, K, A, lda, B, ldb, C, ldc, acc);
}

void gemm_tn(int M, int N, int P, const double* A, int lda, const double* B,
             int ldb, double* C, int ldc, bool acc) {
    gemm_impl<true>(M, N, P, A, lda, B, ldb, C, ldc, acc);
}

void gemm_nt(int M, int N, int P, const double* A, int lda, const double* B,
             int ldb, double* C, int ldc, bool acc) {
#if defined(__AVX512F__)
    // 1x4 tile of row-dot-products, 8-wide over the shared dimension.
    for (int i = 0; i < M; ++i) {
        const double* arow = A + static_cast<size_t>(i) * lda;
        int j = 0;
        for (; j + 4 <= N; j += 4) {
            const double* b0 = B + static_cast<size_t>(j) * ldb;
            const double* b1 = B + static_cast<size_t>(j + 1) * ldb;
            const double* b2 = B + static_cast<size_t>(j + 2) * ldb;
            const double* b3 = B + static_cast<size_t>(j + 3) * ldb;
            __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
            __m512d s2 = _mm512_setzero_pd(), s3 = _mm512_setzero_pd();
            int k = 0;
            for (; k + 8 <= P; k += 8) {
                const __m512d a = _mm512_loadu_pd(arow + k);
                s0 = _mm512_fmadd_pd(a, _mm512_loadu_pd(b0 + k), s0);
                s1 = _mm512_fmadd_pd(a, _mm512_loadu_pd(b1 + k), s1);
                s2 = _mm512_fmadd_pd(a, _mm512_loadu_pd(b2 + k), s2);
                s3 = _mm512_fmadd_pd(a, _mm512_loadu_pd(b3 + k), s3);
            }
            double r0 = _mm512_reduce_add_pd(s0);
            double r1 = _mm512_reduce_add_pd(s1);
            double r2 = _mm512_reduce_add_pd(s2);
            double r3 = _mm512_reduce_add_pd(s3);
            for (; k < P; ++k) {
                const double a = arow[k];
                r0 += a * b0[k];
                r1 += a * b1[k];
                r2 += a * b2[k];
                r3 += a * b3[k];
            }
            double* cp = C + static_cast<size_t>(i) * ldc + j;
            if (acc) {
                cp[0] += r0;
                cp[1] += r1;
                cp[2] += r2;
                cp[3] += r3;
            } else {
                cp[0] = r0;
                cp[1] = r1;
                cp[2] = r2;
                cp[3] = r3;
            }
        }
        for (; j < N; ++j) {
            const double* brow = B + static_cast<size_t>(j) * ldb;
            double s = 0.0;
            for (int k = 0; k < P; ++k) s += arow[k] * brow[k];
            double* cp = C + static_cast<size_t>(i) * ldc + j;
            *cp = acc ? *cp + s : s;
        }
    }
#else
    for (int i = 0; i < M; ++i) {
        const double* arow = A + static_cast<size_t>(i) * lda;
        for (int j = 0; j < N; ++j) {
            const double* brow = B + static_cast<size_t>(j) * ldb;
            double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
            int k = 0;
            for (; k + 4 <= P; k += 4) {
                p0 += arow[k] * brow[k];
                p1 += arow[k + 1] * brow[k + 1];
                p2 += arow[k + 2] * brow[k + 2];
                p3 += arow[k + 3] * brow[k + 3];
            }
            double s = (p0 + p1) + (p2 + p3);
            for (; k < P; ++k) s += arow[k] * brow[k];
            double* cp = C + static_cast<size_t>(i) * ldc + j;
            *cp = acc ? *cp + s : s;
        }
    }
#endif
}

} // namespace avdepth
