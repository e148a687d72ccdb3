#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"
#include "vsr/tensor_io.hpp"

using namespace vsr;

TEST_CASE("tensor construction and invariants") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.shape() == Shape{2, 3});
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK(Tensor::scalar(3.5).item() == 3.5);
}

TEST_CASE("grad buffer matches shape and clears") {
    Tensor t = Tensor::zeros({4});
    CHECK(!t.has_grad());
    t.grad()[2] = 1.0;
    CHECK(t.has_grad());
    CHECK(t.grad().size() == t.numel());
    t.zero_grad();
    CHECK(t.grad()[2] == 0.0);
}

TEST_CASE("rng streams are independent and reproducible") {
    Rng a(123), b(123), c(124);
    auto s1 = a.stream("site/x");
    auto s2 = b.stream("site/x");
    auto s3 = c.stream("site/x");
    auto s4 = a.stream("site/y");
    for (int i = 0; i < 16; ++i) {
        const double v = s1.gaussian();
        CHECK(v == s2.gaussian());
        CHECK(v != s3.gaussian());
    }
    CHECK(s1.uniform() != s4.uniform());
}

TEST_CASE("rng gaussian moments") {
    Rng rng(99);
    auto s = rng.stream("moments");
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = s.gaussian();
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("rten round trip is exact for f32-representable data") {
    Tensor t = Tensor::from_data({2, 2}, {1.0, -0.5, 128.0 / 255.0, 3.25});
    const std::string path = std::filesystem::temp_directory_path() / "vsr_test.rten";
    save_rten(path, t);
    Tensor back = load_rten(path);
    CHECK(back.shape() == t.shape());
    CHECK(back.values()[0] == 1.0);
    CHECK(back.values()[1] == -0.5);
    CHECK(back.values()[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
    CHECK(back.values()[3] == 3.25);
    std::remove(path.c_str());
}

TEST_CASE("rten rejects malformed files") {
    const std::string path = std::filesystem::temp_directory_path() / "vsr_bad.rten";
    write_file_atomic(path, "NOPE");
    CHECK_THROWS_AS(load_rten(path), IoError);
    // rank 2 but only one dim present
    std::string truncated = "RTEN";
    truncated += std::string("\x02\x00\x00\x00\x01\x00\x00\x00", 8);
    write_file_atomic(path, truncated);
    CHECK_THROWS_AS(load_rten(path), IoError);
    std::remove(path.c_str());
}
