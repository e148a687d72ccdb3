#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vsr/gradcheck.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

using namespace vsr;

namespace {

Tensor randn(const Shape& shape, Rng& rng, const std::string& site) {
    Tensor t = Tensor::zeros(shape);
    auto s = rng.stream(site);
    s.fill_gaussian(t);
    return t;
}

}  // namespace

TEST_CASE("backward: loss = sum(x) gives ones") {
    Tensor x = Tensor::from_data({3}, {5.0, -1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(&tape, x);
    backward(loss, tape);
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: loss = sum(x*x) at [1,2] gives [2,4]") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(&tape, mul(&tape, x, x));
    backward(loss, tape);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward errors: non-scalar, foreign loss, double call") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = mul(&tape, x, x);
    CHECK_THROWS_AS(backward(y, tape), TapeError);
    Tensor loss = sum(&tape, y);
    Tensor stranger = Tensor::scalar(1.0);
    CHECK_THROWS_AS(backward(stranger, tape), TapeError);
    backward(loss, tape);
    CHECK_THROWS_AS(backward(loss, tape), TapeError);
}

TEST_CASE("conv2d identity and hand oracle") {
    // 1x1 kernel, unit weight, zero bias: output equals input exactly
    Rng rng(1);
    Tensor x = randn({2, 1, 3, 3}, rng, "conv/x");
    Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(nullptr, x, w, b, 1, 0);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);

    // all-ones 3x3 input and kernel with pad 1: direct summation oracle
    Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor w3 = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y3 = conv2d(nullptr, ones, w3, b, 1, 1);
    CHECK(y3.values()[4] == doctest::Approx(9.0));  // center
    CHECK(y3.values()[0] == doctest::Approx(4.0));  // corner
    CHECK(y3.values()[1] == doctest::Approx(6.0));  // edge

    // shape formula: 4x4, k=3, s=2, p=1 -> 2x2
    Tensor x4 = randn({1, 1, 4, 4}, rng, "conv/x4");
    Tensor y4 = conv2d(nullptr, x4, w3, b, 2, 1);
    CHECK(y4.shape() == Shape{1, 1, 2, 2});

    // channel mismatch is a shape error
    Tensor wbad = Tensor::zeros({1, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(nullptr, ones, wbad, b, 1, 1), ShapeError);
}

TEST_CASE("conv_transpose2d shape, identity, adjoint") {
    Rng rng(2);
    // stride 2, k 4, pad 1 doubles spatial size: 8 -> 16
    Tensor x = randn({1, 2, 8, 8}, rng, "deconv/x");
    Tensor w = randn({2, 3, 4, 4}, rng, "deconv/w");
    Tensor b = Tensor::zeros({3});
    Tensor y = conv_transpose2d(nullptr, x, w, b, 2, 1);
    CHECK(y.shape() == Shape{1, 3, 16, 16});

    // 1x1 kernel, unit weight: identity
    Tensor w1 = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor b1 = Tensor::zeros({1});
    Tensor x1 = randn({1, 1, 5, 5}, rng, "deconv/x1");
    Tensor y1 = conv_transpose2d(nullptr, x1, w1, b1, 1, 0);
    for (std::size_t i = 0; i < x1.numel(); ++i) CHECK(y1.values()[i] == x1.values()[i]);

    // adjoint identity: forward(convT)(v) == d/dx [<conv(x), v>] bit for bit
    Tensor xin = randn({1, 3, 16, 16}, rng, "deconv/xin");
    xin.set_requires_grad(true);
    Tensor v = randn({1, 2, 8, 8}, rng, "deconv/v");
    Tape tape;
    Tensor conv_out = conv2d(&tape, xin, w, Tensor::zeros({2}), 2, 1);
    Tensor loss = sum(&tape, mul(&tape, conv_out, v));
    backward(loss, tape);
    Tensor via_transpose = conv_transpose2d(nullptr, v, w, b, 2, 1);
    for (std::size_t i = 0; i < xin.numel(); ++i)
        CHECK(xin.grad()[i] == via_transpose.values()[i]);
}

TEST_CASE("fully_connected identity and hand arithmetic") {
    Tensor x = Tensor::from_data({1, 2}, {1.0, 2.0});
    Tensor eye = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor zero = Tensor::zeros({2});
    Tensor y = fully_connected(nullptr, x, eye, zero);
    CHECK(y.values()[0] == 1.0);
    CHECK(y.values()[1] == 2.0);

    Tensor bias = Tensor::from_data({2}, {3.0, 4.0});
    Tensor y2 = fully_connected(nullptr, x, eye, bias);
    CHECK(y2.values()[0] == 4.0);
    CHECK(y2.values()[1] == 6.0);

    CHECK_THROWS_AS(fully_connected(nullptr, x, Tensor::zeros({3, 2}), zero), ShapeError);
}

TEST_CASE("fully_connected weight gradient equals input^T ones") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor w = Tensor::zeros({3, 2});
    Tensor b = Tensor::zeros({2});
    w.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(&tape, fully_connected(&tape, x, w, b));
    backward(loss, tape);
    // d sum(xW+b) / dW = x^T . ones
    CHECK(w.grad()[0] == doctest::Approx(5.0));
    CHECK(w.grad()[1] == doctest::Approx(5.0));
    CHECK(w.grad()[2] == doctest::Approx(7.0));
    CHECK(w.grad()[5] == doctest::Approx(9.0));
}

TEST_CASE("leaky_relu values and gradient") {
    Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
    Tensor y = leaky_relu(nullptr, x, 0.2);
    CHECK(y.values()[0] == doctest::Approx(-0.2));
    CHECK(y.values()[1] == 0.0);
    CHECK(y.values()[2] == 2.0);

    x.set_requires_grad(true);
    Tape tape;
    backward(sum(&tape, leaky_relu(&tape, x, 0.2)), tape);
    CHECK(x.grad()[0] == doctest::Approx(0.2));
    CHECK(x.grad()[2] == 1.0);

    Tensor pos = Tensor::from_data({2}, {0.5, 3.0});
    Tensor ypos = leaky_relu(nullptr, pos, 0.2);
    CHECK(ypos.values()[0] == 0.5);
    CHECK(ypos.values()[1] == 3.0);
}

TEST_CASE("softmax values, shift invariance, row sums") {
    Tensor x = Tensor::from_data({1, 2}, {0.0, std::log(3.0)});
    Tensor y = softmax(nullptr, x, 1);
    CHECK(y.values()[0] == doctest::Approx(0.25));
    CHECK(y.values()[1] == doctest::Approx(0.75));

    Tensor u = Tensor::full({1, 5}, 1.3);
    Tensor yu = softmax(nullptr, u, 1);
    for (double v : yu.values()) CHECK(v == doctest::Approx(0.2));

    Rng rng(3);
    Tensor r = randn({4, 7}, rng, "softmax/r");
    Tensor shifted = add_scalar(nullptr, r, 17.5);
    Tensor a = softmax(nullptr, r, 1);
    Tensor bsm = softmax(nullptr, shifted, 1);
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(a.values()[i] == doctest::Approx(bsm.values()[i]).epsilon(1e-12));
    for (int n = 0; n < 4; ++n) {
        double s = 0.0;
        for (int j = 0; j < 7; ++j) s += a.values()[n * 7 + j];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("pixel_shuffle layout, identity, inverse pair") {
    Tensor x = Tensor::from_data({1, 4, 1, 1}, {1.0, 2.0, 3.0, 4.0});
    Tensor y = pixel_shuffle(nullptr, x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.values() == std::vector<double>{1.0, 2.0, 3.0, 4.0});

    Rng rng(4);
    Tensor r = randn({2, 8, 3, 5}, rng, "ps/r");
    Tensor id = pixel_shuffle(nullptr, r, 1);
    CHECK(id.values() == r.values());

    Tensor round = pixel_unshuffle(nullptr, pixel_shuffle(nullptr, r, 2), 2);
    CHECK(round.values() == r.values());

    CHECK_THROWS_AS(pixel_shuffle(nullptr, randn({1, 3, 2, 2}, rng, "ps/bad"), 2), ShapeError);
}

TEST_CASE("batch_norm standardizes in training mode") {
    Rng rng(5);
    Tensor x = randn({2, 3, 4, 4}, rng, "bn/x");
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    auto st = make_batch_norm_state(3);
    Tensor y = batch_norm(nullptr, x, gamma, beta, st, true);
    for (int c = 0; c < 3; ++c) {
        double s = 0.0, ss = 0.0;
        for (int n = 0; n < 2; ++n)
            for (int i = 0; i < 16; ++i) {
                const double v = y.values()[(n * 3 + c) * 16 + i];
                s += v;
                ss += v * v;
            }
        const double m = s / 32.0;
        const double var = ss / 32.0 - m * m;
        CHECK(std::abs(m) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
    }
    // running stats moved toward batch stats
    CHECK(st.running_mean.values()[0] != 0.0);

    CHECK_THROWS_AS(batch_norm(nullptr, randn({1, 2, 1, 1}, rng, "bn/tiny"), Tensor::full({2}, 1.0),
                               Tensor::zeros({2}), st, true),
                    ShapeError);
}

TEST_CASE("gradcheck: linear is exact, quadratic is tight") {
    Rng rng(6);
    // Exactly representable values and a power-of-two step keep the linear
    // case free of rounding, so the reported error is exactly zero.
    Tensor xe = Tensor::from_data({2, 3}, {0.5, 1.0, -2.0, 4.0, 0.25, -0.75});
    auto fsum = [](Tape* t, const std::vector<Tensor>& in) { return sum(t, in[0]); };
    auto r1 = grad_check(fsum, {xe}, 0x1.0p-20);
    CHECK(r1.pass);
    CHECK(r1.max_rel_error == 0.0);

    Tensor x = randn({3, 4}, rng, "gc/x");

    auto fsq = [](Tape* t, const std::vector<Tensor>& in) {
        return sum(t, mul(t, in[0], in[0]));
    };
    auto r2 = grad_check(fsq, {x});
    CHECK(r2.pass);
    CHECK(r2.max_rel_error < 1e-8);
}

TEST_CASE("gradcheck flags a deliberately doubled gradient as ~0.5 error") {
    // custom op with a broken backward: forward sum(x*x), backward reports 2x
    auto broken = [](Tape* tape, const std::vector<Tensor>& in) {
        const Tensor& x = in[0];
        double s = 0.0;
        for (double v : x.values()) s += v * v;
        Tensor out = Tensor::scalar(s);
        if (tape && x.requires_grad()) {
            out.set_requires_grad(true);
            tape->record({out.ptr()}, [xp = x.ptr(), op = out.ptr()] {
                const double g = op->grad[0];
                double* gx = grad_accum(xp);
                for (std::size_t i = 0; i < xp->data.size(); ++i)
                    gx[i] += 2.0 * (2.0 * xp->data[i]) * g;
            });
        }
        return out;
    };
    Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    auto r = grad_check(broken, {x});
    CHECK(!r.pass);
    CHECK(r.max_rel_error == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("gradcheck composite conv -> relu -> sum") {
    Rng rng(8);
    Tensor x = randn({1, 2, 5, 5}, rng, "gc2/x");
    Tensor w = randn({3, 2, 3, 3}, rng, "gc2/w");
    Tensor b = randn({3}, rng, "gc2/b");
    auto f = [](Tape* t, const std::vector<Tensor>& in) {
        return sum(t, leaky_relu(t, conv2d(t, in[0], in[1], in[2], 1, 1), 0.2));
    };
    auto r = grad_check(f, {x, w, b});
    CHECK(r.pass);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradcheck conv_transpose2d, bmm, gram, softmax, pool") {
    Rng rng(9);
    SUBCASE("conv_transpose") {
        Tensor x = randn({1, 3, 4, 4}, rng, "gc3/x");
        Tensor w = randn({3, 2, 4, 4}, rng, "gc3/w");
        Tensor b = randn({2}, rng, "gc3/b");
        auto f = [](Tape* t, const std::vector<Tensor>& in) {
            Tensor y = conv_transpose2d(t, in[0], in[1], in[2], 2, 1);
            return sum(t, mul(t, y, y));
        };
        CHECK(grad_check(f, {x, w, b}).pass);
    }
    SUBCASE("bmm + transpose") {
        Tensor a = randn({2, 3, 4}, rng, "gc3/a");
        Tensor b = randn({2, 3, 5}, rng, "gc3/bb");
        auto f = [](Tape* t, const std::vector<Tensor>& in) {
            Tensor prod = bmm(t, transpose_last2(t, in[0]), in[1]);
            return sum(t, mul(t, prod, prod));
        };
        CHECK(grad_check(f, {a, b}).pass);
    }
    SUBCASE("gram") {
        Tensor x = randn({2, 3, 4, 4}, rng, "gc3/g");
        auto f = [](Tape* t, const std::vector<Tensor>& in) {
            Tensor g = gram_matrix(t, in[0]);
            return sum(t, mul(t, g, g));
        };
        CHECK(grad_check(f, {x}).pass);
    }
    SUBCASE("softmax axis 1 of 3 dims") {
        Tensor x = randn({2, 5, 3}, rng, "gc3/s");
        Tensor wgt = randn({2, 5, 3}, rng, "gc3/sw");
        auto f = [wgt](Tape* t, const std::vector<Tensor>& in) {
            return sum(t, mul(t, softmax(t, in[0], 1), wgt));
        };
        CHECK(grad_check(f, {x}).pass);
    }
    SUBCASE("avg_pool + pixel shuffle") {
        Tensor x = randn({1, 4, 4, 4}, rng, "gc3/p");
        auto f = [](Tape* t, const std::vector<Tensor>& in) {
            Tensor y = pixel_shuffle(t, in[0], 2);
            Tensor z = avg_pool2d(t, y, 2);
            return sum(t, mul(t, z, z));
        };
        CHECK(grad_check(f, {x}).pass);
    }
    SUBCASE("batch_norm training mode") {
        Tensor x = randn({2, 3, 4, 4}, rng, "gc3/bn");
        Tensor gamma = randn({3}, rng, "gc3/bng");
        Tensor beta = randn({3}, rng, "gc3/bnb");
        auto st = std::make_shared<BatchNormState>(make_batch_norm_state(3));
        auto f = [st](Tape* t, const std::vector<Tensor>& in) {
            Tensor y = batch_norm(t, in[0], in[1], in[2], *st, true);
            return sum(t, mul(t, y, y));
        };
        auto r = grad_check(f, {x, gamma, beta});
        CHECK(r.pass);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("slice, concat, reductions") {
        Tensor x = randn({2, 6}, rng, "gc3/sl");
        auto f1 = [](Tape* t, const std::vector<Tensor>& in) {
            Tensor s = slice_cols(t, in[0], 1, 4);
            return mean(t, mul(t, s, s));
        };
        CHECK(grad_check(f1, {x}).pass);

        Tensor a = randn({1, 2, 3, 3}, rng, "gc3/ca");
        Tensor b = randn({1, 3, 3, 3}, rng, "gc3/cb");
        auto f2 = [](Tape* t, const std::vector<Tensor>& in) {
            Tensor c = concat_channels(t, in[0], in[1]);
            Tensor m = spatial_mean(t, c);
            return sum(t, mul(t, m, m));
        };
        CHECK(grad_check(f2, {a, b}).pass);
    }
    SUBCASE("exp log l1") {
        Tensor x = randn({2, 3}, rng, "gc3/el");
        Tensor tgt = randn({2, 3}, rng, "gc3/tg");
        auto f = [tgt](Tape* t, const std::vector<Tensor>& in) {
            Tensor e = exp(t, scale(t, in[0], 0.5));
            Tensor lg = log(t, add_scalar(t, mul(t, e, e), 3.0));
            return add(t, sum(t, lg), l1_loss(t, in[0], tgt));
        };
        CHECK(grad_check(f, {x}).pass);
    }
}

TEST_CASE("determinism: same seed twice gives bit-identical forward and grads") {
    auto run = [] {
        Rng rng(1234);
        Tensor x = Tensor::zeros({2, 3, 8, 8});
        auto s = rng.stream("det/x");
        s.fill_gaussian(x);
        Tensor w = Tensor::zeros({4, 3, 3, 3});
        auto sw = rng.stream("det/w");
        sw.fill_gaussian(w);
        w.set_requires_grad(true);
        Tensor b = Tensor::zeros({4});
        b.set_requires_grad(true);
        Tape tape;
        Tensor y = conv2d(&tape, x, w, b, 1, 1);
        Tensor loss = mean(&tape, mul(&tape, y, y));
        backward(loss, tape);
        return std::make_tuple(loss.item(), w.grad(), b.grad());
    };
    auto [l1, gw1, gb1] = run();
    auto [l2, gw2, gb2] = run();
    CHECK(l1 == l2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);
}
