#include "vsr/kernels.hpp"

// AVX2+FMA kernels. Compiled with -mavx2 -mfma and only reached after a
// runtime CPU check. Each kernel reproduces the scalar reference sequence
// exactly: 4-lane blocked reductions combine partials as (p0+p1)+(p2+p3)
// via a scalar fold of the stored lanes, and every multiply-accumulate is a
// single-rounding fused op, so results are byte-identical to the scalar
// backend.

#if defined(VSR_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>

namespace vsr {
namespace {

void add_avx2(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_avx2(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_avx2(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale_avx2(double* dst, const double* x, double a, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) dst[i] = a * x[i];
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void accumulate_avx2(double* y, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

void leaky_relu_avx2(double* dst, const double* x, double slope, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(slope);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d neg = _mm256_mul_pd(sv, xv);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dst + i, _mm256_blendv_pd(neg, xv, mask));
    }
    for (; i < n; ++i) dst[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_grad_avx2(double* gx, const double* x, const double* g, double slope,
                          std::size_t n) {
    const __m256d sv = _mm256_set1_pd(slope);
    const __m256d ones = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        const __m256d f = _mm256_blendv_pd(sv, ones, mask);
        _mm256_storeu_pd(gx + i,
                         _mm256_fmadd_pd(_mm256_loadu_pd(g + i), f, _mm256_loadu_pd(gx + i)));
    }
    for (; i < n; ++i) {
        const double f = x[i] > 0.0 ? 1.0 : slope;
        gx[i] = std::fma(g[i], f, gx[i]);
    }
}

// Fold four lanes the same way the reference does.
inline double combine_lanes(__m256d acc) {
    alignas(32) double p[4];
    _mm256_store_pd(p, acc);
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double total = combine_lanes(acc);
    for (; i < n; ++i) total += x[i];
    return total;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double total = combine_lanes(acc);
    for (; i < n; ++i) total = std::fma(a[i], b[i], total);
    return total;
}

// 4x8 register tile; every C[i,j] still sees the ascending-k fma chain.
void gemm_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
               double* c) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + (i + 0) * k;
        const double* a1 = a + (i + 1) * k;
        const double* a2 = a + (i + 2) * k;
        const double* a3 = a + (i + 3) * k;
        double* c0 = c + (i + 0) * n;
        double* c1 = c + (i + 1) * n;
        double* c2 = c + (i + 2) * n;
        double* c3 = c + (i + 3) * n;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
            __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
            __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4);
            __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d b0 = _mm256_loadu_pd(b + kk * n + j);
                const __m256d b1 = _mm256_loadu_pd(b + kk * n + j + 4);
                __m256d av;
                av = _mm256_set1_pd(a0[kk]);
                r00 = _mm256_fmadd_pd(av, b0, r00);
                r01 = _mm256_fmadd_pd(av, b1, r01);
                av = _mm256_set1_pd(a1[kk]);
                r10 = _mm256_fmadd_pd(av, b0, r10);
                r11 = _mm256_fmadd_pd(av, b1, r11);
                av = _mm256_set1_pd(a2[kk]);
                r20 = _mm256_fmadd_pd(av, b0, r20);
                r21 = _mm256_fmadd_pd(av, b1, r21);
                av = _mm256_set1_pd(a3[kk]);
                r30 = _mm256_fmadd_pd(av, b0, r30);
                r31 = _mm256_fmadd_pd(av, b1, r31);
            }
            _mm256_storeu_pd(c0 + j, r00);
            _mm256_storeu_pd(c0 + j + 4, r01);
            _mm256_storeu_pd(c1 + j, r10);
            _mm256_storeu_pd(c1 + j + 4, r11);
            _mm256_storeu_pd(c2 + j, r20);
            _mm256_storeu_pd(c2 + j + 4, r21);
            _mm256_storeu_pd(c3 + j, r30);
            _mm256_storeu_pd(c3 + j + 4, r31);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d r0 = _mm256_loadu_pd(c0 + j);
            __m256d r1 = _mm256_loadu_pd(c1 + j);
            __m256d r2 = _mm256_loadu_pd(c2 + j);
            __m256d r3 = _mm256_loadu_pd(c3 + j);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d bv = _mm256_loadu_pd(b + kk * n + j);
                r0 = _mm256_fmadd_pd(_mm256_set1_pd(a0[kk]), bv, r0);
                r1 = _mm256_fmadd_pd(_mm256_set1_pd(a1[kk]), bv, r1);
                r2 = _mm256_fmadd_pd(_mm256_set1_pd(a2[kk]), bv, r2);
                r3 = _mm256_fmadd_pd(_mm256_set1_pd(a3[kk]), bv, r3);
            }
            _mm256_storeu_pd(c0 + j, r0);
            _mm256_storeu_pd(c1 + j, r1);
            _mm256_storeu_pd(c2 + j, r2);
            _mm256_storeu_pd(c3 + j, r3);
        }
        for (; j < n; ++j) {
            double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double bv = b[kk * n + j];
                s0 = std::fma(a0[kk], bv, s0);
                s1 = std::fma(a1[kk], bv, s1);
                s2 = std::fma(a2[kk], bv, s2);
                s3 = std::fma(a3[kk], bv, s3);
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d r = _mm256_loadu_pd(crow + j);
            for (std::size_t kk = 0; kk < k; ++kk)
                r = _mm256_fmadd_pd(_mm256_set1_pd(arow[kk]), _mm256_loadu_pd(b + kk * n + j), r);
            _mm256_storeu_pd(crow + j, r);
        }
        for (; j < n; ++j) {
            double s = crow[j];
            for (std::size_t kk = 0; kk < k; ++kk) s = std::fma(arow[kk], b[kk * n + j], s);
            crow[j] = s;
        }
    }
}

constexpr Kernels kAvx2Kernels = {
    add_avx2,        sub_avx2,  mul_avx2,
    scale_avx2,      axpy_avx2, accumulate_avx2,
    leaky_relu_avx2, leaky_relu_grad_avx2,
    sum_avx2,        dot_avx2,  gemm_avx2,
    "avx2",
};

}  // namespace

namespace detail {

const Kernels* avx2_kernels() {
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2Kernels;
    return nullptr;
}

}  // namespace detail
}  // namespace vsr

#else  // !VSR_HAVE_AVX2

namespace vsr::detail {

const Kernels* avx2_kernels() { return nullptr; }

}  // namespace vsr::detail

#endif
