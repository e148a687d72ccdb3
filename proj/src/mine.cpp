#include "vsr/mine.hpp"

#include <cmath>

#include "vsr/kernels.hpp"
#include "vsr/ops.hpp"

namespace vsr {

Tensor mine_lower_bound(Tape* tape, const StatFn& T, const Tensor& x, const Tensor& y_joint,
                        const Tensor& y_marginal) {
    if (x.dim(0) < 2) throw DataError("mine_lower_bound needs batches of at least 2");
    Tensor tj = T(tape, x, y_joint);
    Tensor tm = T(tape, x, y_marginal);
    const double m = max_value(tm);
    Tensor lse = add_scalar(tape, log(tape, mean(tape, exp(tape, add_scalar(tape, tm, -m)))), m);
    return sub(tape, mean(tape, tj), lse);
}

std::vector<int> derangement(int n, RngStream& stream) {
    if (n < 2) throw DataError("cannot build a marginal batch from " + std::to_string(n) +
                               " sample(s)");
    std::vector<int> perm(n);
    if (n == 2) {
        perm[0] = 1;
        perm[1] = 0;
        return perm;
    }
    while (true) {
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(stream.next_below(static_cast<std::uint64_t>(i + 1)));
            std::swap(perm[i], perm[j]);
        }
        bool fixed = false;
        for (int i = 0; i < n; ++i)
            if (perm[i] == i) {
                fixed = true;
                break;
            }
        if (!fixed) return perm;
    }
}

Tensor permute_batch(Tape* tape, const Tensor& y, const std::vector<int>& perm) {
    const int n = y.dim(0);
    if (static_cast<int>(perm.size()) != n)
        throw ShapeError("permutation length does not match batch size");
    const std::size_t row = y.numel() / static_cast<std::size_t>(n);
    Tensor out = Tensor::zeros(y.shape());
    for (int i = 0; i < n; ++i)
        std::copy(y.data() + perm[i] * row, y.data() + (perm[i] + 1) * row,
                  out.data() + i * row);
    if (grad_needed(tape, {&y})) {
        out.set_requires_grad(true);
        tape->record({out.ptr()}, [yp = y.ptr(), op = out.ptr(), perm, row] {
            const double* g = grad_or_null(op);
            if (!g || !yp->requires_grad) return;
            double* gy = grad_accum(yp);
            for (std::size_t i = 0; i < perm.size(); ++i)
                kernels().accumulate(gy + perm[i] * row, g + i * row, row);
        });
    }
    return out;
}

Tensor StatisticsNetwork::forward(Tape* tape, const Tensor& x_img, const Tensor& y_img) const {
    Tensor h = concat_channels(tape, x_img, y_img);
    h = leaky_relu(tape, c1.forward(tape, h), slope);
    h = leaky_relu(tape, c2.forward(tape, h), slope);
    h = c3.forward(tape, h);
    h = spatial_mean(tape, h);
    h = leaky_relu(tape, fc1.forward(tape, h), slope);
    return fc2.forward(tape, h);
}

StatFn StatisticsNetwork::fn() const {
    // capture by value: layer structs share the parameter storage
    return [net = *this](Tape* tape, const Tensor& x, const Tensor& y) {
        return net.forward(tape, x, y);
    };
}

void StatisticsNetwork::collect(ParamList& out) const {
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
    fc1.collect(out);
    fc2.collect(out);
}

StatisticsNetwork make_statistics_network(const Rng& rng, const std::string& name,
                                          int image_channels, int w1, int w2, int w3,
                                          int fc_dim) {
    StatisticsNetwork net;
    net.c1 = make_conv(rng, name + ".conv1", 2 * image_channels, w1, 3, 1, 0);
    net.c2 = make_conv(rng, name + ".conv2", w1, w2, 3, 1, 0);
    net.c3 = make_conv(rng, name + ".conv3", w2, w3, 3, 1, 0);
    net.fc1 = make_linear(rng, name + ".fc1", w3, fc_dim);
    net.fc2 = make_linear(rng, name + ".fc2", fc_dim, 1);
    return net;
}

Tensor MlpStatNet::forward(Tape* tape, const Tensor& x, const Tensor& y) const {
    if (x.rank() != 2 || y.rank() != 2)
        throw ShapeError("MlpStatNet expects [B,d] inputs");
    const int n = x.dim(0), dx = x.dim(1), dy = y.dim(1);
    Tensor xy = Tensor::zeros({n, dx + dy});
    for (int i = 0; i < n; ++i) {
        std::copy(x.data() + i * dx, x.data() + (i + 1) * dx, xy.data() + i * (dx + dy));
        std::copy(y.data() + i * dy, y.data() + (i + 1) * dy, xy.data() + i * (dx + dy) + dx);
    }
    // joining is a fixed scatter; route gradients with a tape node
    if (grad_needed(tape, {&x, &y})) {
        xy.set_requires_grad(true);
        tape->record({xy.ptr()}, [xp = x.ptr(), yp = y.ptr(), op = xy.ptr(), n, dx, dy] {
            const double* g = grad_or_null(op);
            if (!g) return;
            for (int i = 0; i < n; ++i) {
                if (xp->requires_grad)
                    kernels().accumulate(grad_accum(xp) + i * dx, g + i * (dx + dy),
                                         static_cast<std::size_t>(dx));
                if (yp->requires_grad)
                    kernels().accumulate(grad_accum(yp) + i * dy, g + i * (dx + dy) + dx,
                                         static_cast<std::size_t>(dy));
            }
        });
    }
    Tensor h = leaky_relu(tape, fc1.forward(tape, xy), slope);
    h = leaky_relu(tape, fc2.forward(tape, h), slope);
    return fc3.forward(tape, h);
}

StatFn MlpStatNet::fn() const {
    return [net = *this](Tape* tape, const Tensor& x, const Tensor& y) {
        return net.forward(tape, x, y);
    };
}

void MlpStatNet::collect(ParamList& out) const {
    fc1.collect(out);
    fc2.collect(out);
    fc3.collect(out);
}

MlpStatNet make_mlp_statnet(const Rng& rng, const std::string& name, int hidden) {
    MlpStatNet net;
    net.fc1 = make_linear(rng, name + ".fc1", 2, hidden);
    net.fc2 = make_linear(rng, name + ".fc2", hidden, hidden);
    net.fc3 = make_linear(rng, name + ".fc3", hidden, 1);
    return net;
}

MineEstimator::MineEstimator(StatFn T, ParamList theta, double lr, double beta1, double beta2,
                             double ema_rate)
    : T_(std::move(T)), opt_(std::move(theta), lr, beta1, beta2), ema_rate_(ema_rate) {}

double MineEstimator::train_step(const Tensor& x, const Tensor& y, RngStream& perm_stream) {
    const int b = x.dim(0);
    const auto perm = derangement(b, perm_stream);

    opt_.zero_grad();
    Tape tape;
    Tensor y_marg = permute_batch(&tape, y, perm);
    Tensor tj = T_(&tape, x, y);
    Tensor tm = T_(&tape, x, y_marg);

    const double shift = max_value(tm);
    Tensor shifted_mean = mean(&tape, exp(&tape, add_scalar(&tape, tm, -shift)));
    const double batch_mean_exp = shifted_mean.item() * std::exp(shift);
    const double nu = mean(nullptr, tj).item() - (std::log(shifted_mean.item()) + shift);

    if (!ema_init_) {
        ema_ = batch_mean_exp;
        ema_init_ = true;
    } else {
        ema_ = (1.0 - ema_rate_) * ema_ + ema_rate_ * batch_mean_exp;
    }

    // Surrogate whose gradient is the bias-modified one: the log-mean-exp
    // term's gradient uses the EMA denominator instead of the batch mean.
    Tensor loss = add(&tape, scale(&tape, mean(&tape, tj), -1.0),
                      scale(&tape, shifted_mean, std::exp(shift) / ema_));
    backward(loss, tape);
    opt_.step();
    return nu;
}

Tensor mi_maximization_loss(Tape* tape, const StatFn& T, const Tensor& x_real,
                            const Tensor& y_generated, RngStream& perm_stream) {
    const auto perm = derangement(y_generated.dim(0), perm_stream);
    Tensor y_marg = permute_batch(tape, y_generated, perm);
    Tensor nu = mine_lower_bound(tape, T, x_real, y_generated, y_marg);
    return scale(tape, nu, -1.0);
}

}  // namespace vsr
