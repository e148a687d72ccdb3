#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "vsr/kernels.hpp"
#include "vsr/rng.hpp"

using namespace vsr;

namespace {

std::vector<double> random_vec(std::size_t n, RngStream& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

bool bytes_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

// Every SIMD backend must be byte-identical to the scalar reference on the
// same inputs; this is what makes runtime dispatch invisible to results.
TEST_CASE("backend equivalence on elementwise and reduction kernels") {
    const Kernels& ref = detail::scalar_kernels();
    const Kernels* simd = detail::avx2_kernels();
    if (!simd) {
        MESSAGE("avx2 backend unavailable on this machine; equivalence vacuous");
        return;
    }
    Rng rng(0xC0FFEE);
    for (std::size_t n : {std::size_t(1), std::size_t(3), std::size_t(4), std::size_t(7),
                          std::size_t(64), std::size_t(1023)}) {
        auto stream = rng.stream("kern/" + std::to_string(n));
        const auto a = random_vec(n, stream);
        const auto b = random_vec(n, stream);
        std::vector<double> r1(n), r2(n);

        ref.add(r1.data(), a.data(), b.data(), n);
        simd->add(r2.data(), a.data(), b.data(), n);
        CHECK(bytes_equal(r1, r2));

        ref.sub(r1.data(), a.data(), b.data(), n);
        simd->sub(r2.data(), a.data(), b.data(), n);
        CHECK(bytes_equal(r1, r2));

        ref.mul(r1.data(), a.data(), b.data(), n);
        simd->mul(r2.data(), a.data(), b.data(), n);
        CHECK(bytes_equal(r1, r2));

        ref.scale(r1.data(), a.data(), 1.7, n);
        simd->scale(r2.data(), a.data(), 1.7, n);
        CHECK(bytes_equal(r1, r2));

        r1 = b;
        r2 = b;
        ref.axpy(r1.data(), -0.3, a.data(), n);
        simd->axpy(r2.data(), -0.3, a.data(), n);
        CHECK(bytes_equal(r1, r2));

        r1 = b;
        r2 = b;
        ref.accumulate(r1.data(), a.data(), n);
        simd->accumulate(r2.data(), a.data(), n);
        CHECK(bytes_equal(r1, r2));

        ref.leaky_relu(r1.data(), a.data(), 0.2, n);
        simd->leaky_relu(r2.data(), a.data(), 0.2, n);
        CHECK(bytes_equal(r1, r2));

        r1 = b;
        r2 = b;
        ref.leaky_relu_grad(r1.data(), a.data(), b.data(), 0.2, n);
        simd->leaky_relu_grad(r2.data(), a.data(), b.data(), 0.2, n);
        CHECK(bytes_equal(r1, r2));

        CHECK(ref.sum(a.data(), n) == simd->sum(a.data(), n));
        CHECK(ref.dot(a.data(), b.data(), n) == simd->dot(a.data(), b.data(), n));
    }
}

TEST_CASE("backend equivalence on gemm, including ragged tiles") {
    const Kernels& ref = detail::scalar_kernels();
    const Kernels* simd = detail::avx2_kernels();
    if (!simd) return;
    Rng rng(42);
    for (auto [m, k, n] : std::vector<std::array<std::size_t, 3>>{
             {1, 1, 1}, {2, 3, 5}, {4, 8, 8}, {5, 7, 9}, {4, 16, 12}, {13, 11, 17}, {8, 64, 33}}) {
        auto stream = rng.stream("gemm/" + std::to_string(m * 100 + k * 10 + n));
        const auto a = random_vec(m * k, stream);
        const auto b = random_vec(k * n, stream);
        auto c1 = random_vec(m * n, stream);
        auto c2 = c1;
        ref.gemm(m, k, n, a.data(), b.data(), c1.data());
        simd->gemm(m, k, n, a.data(), b.data(), c2.data());
        CHECK(bytes_equal(c1, c2));
    }
}

TEST_CASE("gemm matches a naive triple loop") {
    Rng rng(7);
    auto stream = rng.stream("gemm/naive");
    const std::size_t m = 6, k = 9, n = 11;
    const auto a = random_vec(m * k, stream);
    const auto b = random_vec(k * n, stream);
    std::vector<double> c(m * n, 0.0), expect(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
            expect[i * n + j] = s;
        }
    kernels().gemm(m, k, n, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("reduction kernels match plain accumulation") {
    Rng rng(11);
    auto stream = rng.stream("sums");
    const auto a = random_vec(257, stream);
    const auto b = random_vec(257, stream);
    double s = 0.0, d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i];
        d += a[i] * b[i];
    }
    CHECK(kernels().sum(a.data(), a.size()) == doctest::Approx(s).epsilon(1e-12));
    CHECK(kernels().dot(a.data(), b.data(), a.size()) == doctest::Approx(d).epsilon(1e-12));
}

TEST_CASE("backend selection") {
    auto names = available_kernel_backends();
    CHECK(names.front() == "scalar");
    set_kernel_backend("scalar");
    CHECK(std::string(kernels().name) == "scalar");
    set_kernel_backend("auto");
    CHECK_THROWS(set_kernel_backend("quantum"));
}
