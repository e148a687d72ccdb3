#pragma once

#include <functional>
#include <vector>

#include "vsr/layers.hpp"
#include "vsr/optim.hpp"

namespace vsr {

// Statistics network as a callable: maps a batch of (x, y) pairs to [B,1]
// scores. Concrete nets below provide bound forms.
using StatFn = std::function<Tensor(Tape*, const Tensor& x, const Tensor& y)>;

// Donsker-Varadhan lower bound nu = mean T(x,y) - log mean e^{T(x,ybar)},
// with the log term evaluated through a max-shifted log-sum-exp so scores up
// to +-500 stay finite.
Tensor mine_lower_bound(Tape* tape, const StatFn& T, const Tensor& x, const Tensor& y_joint,
                        const Tensor& y_marginal);

// Fixed-point-free permutation of [0,n) drawn from the stream. n == 2 swaps;
// n == 1 throws (a marginal batch cannot be built).
std::vector<int> derangement(int n, RngStream& stream);
// Reorders the leading (batch) dimension; differentiable.
Tensor permute_batch(Tape* tape, const Tensor& y, const std::vector<int>& perm);

// Conv stack over channel-concatenated image pairs: three 3x3 valid convs
// with LeakyReLU between, global average pool, FC, LeakyReLU, FC to one
// score per pair.
struct StatisticsNetwork {
    ConvLayer c1, c2, c3;
    LinearLayer fc1, fc2;
    double slope = 0.2;

    Tensor forward(Tape* tape, const Tensor& x_img, const Tensor& y_img) const;
    StatFn fn() const;
    void collect(ParamList& out) const;
};
StatisticsNetwork make_statistics_network(const Rng& rng, const std::string& name,
                                          int image_channels, int w1 = 16, int w2 = 32,
                                          int w3 = 64, int fc_dim = 1024);

// MLP scorer for low-dimensional pairs (the Gaussian benchmark); input is the
// column-concatenation [x|y] of shape [B,2].
struct MlpStatNet {
    LinearLayer fc1, fc2, fc3;
    double slope = 0.2;

    Tensor forward(Tape* tape, const Tensor& x, const Tensor& y) const;
    StatFn fn() const;
    void collect(ParamList& out) const;
};
MlpStatNet make_mlp_statnet(const Rng& rng, const std::string& name, int hidden);

// Trainer state for the statistics network: its Adam optimizer plus the
// moving-average denominator used for the bias-corrected gradient of the
// log-mean-exp term.
class MineEstimator {
public:
    MineEstimator() = default;
    MineEstimator(StatFn T, ParamList theta, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double ema_rate = 0.01);

    // One ascent step on nu: builds the in-batch marginal by derangement,
    // applies the bias-modified gradient (log-term gradient divided by the
    // EMA of mean e^T instead of the batch mean), updates theta. Returns the
    // plain nu estimate for this batch.
    double train_step(const Tensor& x, const Tensor& y, RngStream& perm_stream);

    double ema_denominator() const { return ema_; }
    void set_ema_denominator(double v) { ema_ = v; }
    bool ema_initialized() const { return ema_init_; }
    double ema_rate() const { return ema_rate_; }
    Adam& optimizer() { return opt_; }
    const StatFn& stat_fn() const { return T_; }

private:
    StatFn T_;
    Adam opt_;
    double ema_ = 1.0;
    bool ema_init_ = false;
    double ema_rate_ = 0.01;
};

// Generator-side objective: -nu with gradients flowing into the generated
// images (and not applied to theta; theta has its own optimizer).
Tensor mi_maximization_loss(Tape* tape, const StatFn& T, const Tensor& x_real,
                            const Tensor& y_generated, RngStream& perm_stream);

}  // namespace vsr
