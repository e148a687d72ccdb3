#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vsr {

// Dense f64 inner loops behind the tensor ops. Scalar reference kernels and a
// runtime-selected AVX2 variant share one contract: every backend performs the
// identical IEEE-754 operation sequence per output element. Reductions use a
// fixed 4-lane blocked order, multiply-accumulates are explicit fused ops
// (std::fma / vfmadd), and no backend relies on compiler contraction. Outputs
// are therefore byte-identical across backends and backend selection never
// changes results.
//
// gemm computes C += A*B for row-major A[MxK], B[KxN], C[MxN]; the caller
// zero-fills C when plain assignment is wanted. Buffers must not alias.
struct Kernels {
    void (*add)(double* dst, const double* a, const double* b, std::size_t n);
    void (*sub)(double* dst, const double* a, const double* b, std::size_t n);
    void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
    void (*scale)(double* dst, const double* x, double a, std::size_t n);   // dst = a*x
    void (*axpy)(double* y, double a, const double* x, std::size_t n);      // y += a*x
    void (*accumulate)(double* y, const double* x, std::size_t n);          // y += x
    void (*leaky_relu)(double* dst, const double* x, double slope, std::size_t n);
    // gx += g * (x > 0 ? 1 : slope), accumulated with one fused rounding
    void (*leaky_relu_grad)(double* gx, const double* x, const double* g, double slope,
                            std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*gemm)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                 double* c);
    const char* name;
};

// Active backend. Selected once: VSR_KERNELS env var ("scalar"/"avx2") wins,
// otherwise the best variant the CPU supports.
const Kernels& kernels();

// Force a backend by name ("auto", "scalar", "avx2"). Throws ConfigError if
// the backend is unknown or unsupported on this machine. Intended for tests
// and the CLI, not for concurrent use.
void set_kernel_backend(const std::string& name);

// Names of backends usable on this machine, reference first.
std::vector<std::string> available_kernel_backends();

namespace detail {
const Kernels& scalar_kernels();
// Null when the build or the CPU lacks AVX2+FMA.
const Kernels* avx2_kernels();
}  // namespace detail

}  // namespace vsr
