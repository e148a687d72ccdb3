#include "vsr/kernels.hpp"

#include <cmath>

// Reference kernels. These define the canonical operation sequence; the SIMD
// variants must reproduce it bit for bit. In particular:
//   - reductions accumulate into four interleaved partials combined as
//     (p0+p1)+(p2+p3), then fold the tail sequentially;
//   - multiply-accumulate is always std::fma (single rounding).

namespace vsr {
namespace {

void add_scalar(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_scalar(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_scalar(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale_scalar(double* dst, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a * x[i];
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void accumulate_scalar(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void leaky_relu_scalar(double* dst, const double* x, double slope, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_grad_scalar(double* gx, const double* x, const double* g, double slope,
                            std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double f = x[i] > 0.0 ? 1.0 : slope;
        gx[i] = std::fma(g[i], f, gx[i]);
    }
}

double sum_scalar(const double* x, std::size_t n) {
    double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        p0 += x[i + 0];
        p1 += x[i + 1];
        p2 += x[i + 2];
        p3 += x[i + 3];
    }
    double total = (p0 + p1) + (p2 + p3);
    for (; i < n; ++i) total += x[i];
    return total;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        p0 = std::fma(a[i + 0], b[i + 0], p0);
        p1 = std::fma(a[i + 1], b[i + 1], p1);
        p2 = std::fma(a[i + 2], b[i + 2], p2);
        p3 = std::fma(a[i + 3], b[i + 3], p3);
    }
    double total = (p0 + p1) + (p2 + p3);
    for (; i < n; ++i) total = std::fma(a[i], b[i], total);
    return total;
}

// Canonical gemm order: each C[i,j] is an fma chain over ascending k starting
// from the incoming C value. Loop nest is i-k-j for locality; the per-element
// sequence is what the SIMD tiles must match.
void gemm_scalar(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                 double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a[i * k + kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

constexpr Kernels kScalarKernels = {
    add_scalar,        sub_scalar,  mul_scalar,
    scale_scalar,      axpy_scalar, accumulate_scalar,
    leaky_relu_scalar, leaky_relu_grad_scalar,
    sum_scalar,        dot_scalar,  gemm_scalar,
    "scalar",
};

}  // namespace

namespace detail {

const Kernels& scalar_kernels() { return kScalarKernels; }

}  // namespace detail
}  // namespace vsr
