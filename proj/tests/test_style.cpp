#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vsr/gradcheck.hpp"
#include "vsr/style.hpp"

using namespace vsr;

namespace {

Tensor randn(const Shape& shape, Rng& rng, const std::string& site) {
    Tensor t = Tensor::zeros(shape);
    auto s = rng.stream(site);
    s.fill_gaussian(t);
    return t;
}

void channel_stats(const Tensor& x, int n, int c, double& mean, double& stddev) {
    const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double* p = x.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < H * W; ++i) {
        s += p[i];
        ss += p[i] * p[i];
    }
    mean = s / (H * W);
    stddev = std::sqrt(std::max(0.0, ss / (H * W) - mean * mean));
}

}  // namespace

TEST_CASE("instance_stats on constant and two-point maps") {
    Tensor c5 = Tensor::full({1, 1, 2, 2}, 5.0);
    auto [m5, s5] = instance_stats(nullptr, c5);
    CHECK(m5.values()[0] == doctest::Approx(5.0));
    CHECK(s5.values()[0] == doctest::Approx(std::sqrt(1e-5)).epsilon(1e-10));  // eps floor

    Tensor two = Tensor::from_data({1, 1, 1, 2}, {1.0, 3.0});
    auto [m2, s2] = instance_stats(nullptr, two);
    CHECK(m2.values()[0] == doctest::Approx(2.0));
    CHECK(s2.values()[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("instance_stats gradcheck") {
    Rng rng(21);
    Tensor x = randn({2, 3, 4, 4}, rng, "is/x");
    auto f = [](Tape* t, const std::vector<Tensor>& in) {
        auto [m, s] = instance_stats(t, in[0]);
        return add(t, sum(t, m), sum(t, s));
    };
    auto r = grad_check(f, {x});
    CHECK(r.pass);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("adain matches requested statistics") {
    Rng rng(22);
    Tensor x = randn({2, 4, 8, 8}, rng, "adain/x");
    AdaInParams p;
    p.y_s = Tensor::full({2, 4}, 2.0);
    p.y_b = Tensor::full({2, 4}, 3.0);
    Tensor y = adain(nullptr, x, p);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 4; ++c) {
            double m, s;
            channel_stats(y, n, c, m, s);
            CHECK(m == doctest::Approx(3.0).epsilon(1e-6));
            CHECK(std::abs(s - 2.0) < 1e-4);
        }
}

TEST_CASE("adain with unit scale and zero bias instance-normalizes") {
    Rng rng(23);
    Tensor x = randn({1, 2, 6, 6}, rng, "adain/x2");
    AdaInParams p;
    p.y_s = Tensor::full({1, 2}, 1.0);
    p.y_b = Tensor::zeros({1, 2});
    Tensor y = adain(nullptr, x, p);
    for (int c = 0; c < 2; ++c) {
        double m, s;
        channel_stats(y, 0, c, m, s);
        CHECK(std::abs(m) < 1e-10);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-4));
    }
    // already standardized input passes through
    Tensor y2 = adain(nullptr, y, p);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(y2.values()[i] == doctest::Approx(y.values()[i]).epsilon(1e-6));
}

TEST_CASE("adain is idempotent for fixed params") {
    Rng rng(24);
    // The re-application error is |out-y_b| * eps/2 * |1/var(x) - 1/y_s^2|,
    // so the 1e-6 fixed-point bound needs both variances well above the
    // 1e-5 stabilizer.
    Tensor x = randn({2, 3, 5, 5}, rng, "adain/x3");
    for (double& v : x.values()) v *= 100.0;
    AdaInParams p;
    p.y_s = randn({2, 3}, rng, "adain/s");
    for (double& v : p.y_s.values()) v = std::abs(v) * 20.0 + 100.0;
    p.y_b = randn({2, 3}, rng, "adain/b");
    Tensor once = adain(nullptr, x, p);
    Tensor twice = adain(nullptr, once, p);
    for (std::size_t i = 0; i < once.numel(); ++i)
        CHECK(twice.values()[i] == doctest::Approx(once.values()[i]).epsilon(1e-6));
}

TEST_CASE("style_params_from_latent zero head gives identity modulation") {
    Rng rng(25);
    LinearLayer head;
    head.name = "head";
    head.w = Tensor::zeros({8, 12});
    head.b = Tensor::zeros({12});
    Tensor z = randn({3, 8}, rng, "sp/z");
    AdaInParams p = style_params_from_latent(nullptr, z, head);
    CHECK(p.y_s.shape() == Shape{3, 6});
    CHECK(p.y_b.shape() == Shape{3, 6});
    for (double v : p.y_s.values()) CHECK(v == 1.0);
    for (double v : p.y_b.values()) CHECK(v == 0.0);
}

TEST_CASE("style head shapes: d_style=128, C=64") {
    Rng rng(26);
    LinearLayer head = make_linear(rng, "head", 128, 128);
    Tensor z = randn({2, 128}, rng, "sp/z2");
    AdaInParams p = style_params_from_latent(nullptr, z, head);
    CHECK(p.y_s.shape() == Shape{2, 64});
    CHECK(p.y_b.shape() == Shape{2, 64});
}

TEST_CASE("gradcheck through style head and adain") {
    Rng rng(27);
    Tensor x = randn({1, 4, 3, 3}, rng, "sp/x");
    Tensor w = randn({6, 8}, rng, "sp/w");
    Tensor b = randn({8}, rng, "sp/b");
    Tensor z = randn({1, 6}, rng, "sp/z3");
    auto f = [x](Tape* t, const std::vector<Tensor>& in) {
        LinearLayer head;
        head.w = in[1];
        head.b = in[2];
        AdaInParams p = style_params_from_latent(t, in[0], head);
        Tensor y = adain(t, x, p);
        return sum(t, mul(t, y, y));
    };
    auto r = grad_check(f, {z, w, b});
    CHECK(r.pass);
}

TEST_CASE("reparameterize: zero-variance limit, determinism, moments") {
    Rng rng(28);
    Tensor mu = randn({2, 5}, rng, "rp/mu");
    Tensor lv = Tensor::full({2, 5}, -100.0);
    auto s1 = rng.stream("rp/eps");
    Tensor z = reparameterize(nullptr, mu, lv, s1);
    for (std::size_t i = 0; i < z.numel(); ++i)
        CHECK(z.values()[i] == doctest::Approx(mu.values()[i]).epsilon(1e-15));

    auto s2 = rng.stream("rp/eps");
    Tensor z2 = reparameterize(nullptr, mu, lv, s2);
    CHECK(z.values() == z2.values());

    // mu=0, log_var=0: sample mean ~ 0, std ~ 1 over 1e5 draws
    Tensor mu0 = Tensor::zeros({100, 1000});
    Tensor lv0 = Tensor::zeros({100, 1000});
    auto s3 = rng.stream("rp/mc");
    Tensor zs = reparameterize(nullptr, mu0, lv0, s3);
    double sum = 0.0, sumsq = 0.0;
    for (double v : zs.values()) {
        sum += v;
        sumsq += v * v;
    }
    const double m = sum / zs.numel();
    const double sd = std::sqrt(sumsq / zs.numel() - m * m);
    CHECK(std::abs(m) < 0.02);
    CHECK(sd > 0.98);
    CHECK(sd < 1.02);
}

TEST_CASE("reparameterize gradcheck with frozen eps") {
    Rng rng(29);
    Tensor mu = randn({2, 3}, rng, "rpg/mu");
    Tensor lv = randn({2, 3}, rng, "rpg/lv");
    Tensor eps = randn({2, 3}, rng, "rpg/eps");
    auto f = [eps](Tape* t, const std::vector<Tensor>& in) {
        Tensor z = reparameterize(t, in[0], in[1], eps);
        return sum(t, mul(t, z, z));
    };
    auto r = grad_check(f, {mu, lv});
    CHECK(r.pass);
}

TEST_CASE("kl_divergence exact values and nonnegativity") {
    CHECK(kl_divergence(nullptr, Tensor::zeros({1, 1}), Tensor::zeros({1, 1})).item() == 0.0);
    CHECK(kl_divergence(nullptr, Tensor::full({1, 1}, 1.0), Tensor::zeros({1, 1})).item() == 0.5);
    CHECK(kl_divergence(nullptr, Tensor::zeros({4, 7}), Tensor::zeros({4, 7})).item() == 0.0);

    Rng rng(30);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor mu = randn({3, 5}, rng, "kl/mu" + std::to_string(trial));
        Tensor lv = randn({3, 5}, rng, "kl/lv" + std::to_string(trial));
        CHECK(kl_divergence(nullptr, mu, lv).item() >= 0.0);
    }
}

TEST_CASE("kl_divergence gradcheck") {
    Rng rng(31);
    Tensor mu = randn({2, 4}, rng, "klg/mu");
    Tensor lv = randn({2, 4}, rng, "klg/lv");
    auto f = [](Tape* t, const std::vector<Tensor>& in) {
        return kl_divergence(t, in[0], in[1]);
    };
    CHECK(grad_check(f, {mu, lv}).pass);
}
