#pragma once

#include <utility>

#include "vsr/tape.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Differentiable tensor ops. Every op executes eagerly, validates shapes, and
// records its backward closure on `tape` when given one and some input
// requires gradients. Pass tape = nullptr for inference.

// ---- elementwise ----
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add_scalar(Tape* tape, const Tensor& x, double c);
Tensor scale(Tape* tape, const Tensor& x, double c);
Tensor exp(Tape* tape, const Tensor& x);
Tensor log(Tape* tape, const Tensor& x);
Tensor leaky_relu(Tape* tape, const Tensor& x, double slope);

// ---- reductions ----
Tensor sum(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const Tensor& x);
// Mean over the spatial dims of [N,C,H,W] -> [N,C] (global average pooling).
Tensor spatial_mean(Tape* tape, const Tensor& x);

// ---- shape ----
Tensor reshape(Tape* tape, const Tensor& x, const Shape& shape);
// [N,P,Q] -> [N,Q,P]
Tensor transpose_last2(Tape* tape, const Tensor& x);
// Columns [c0, c1) of a [N,D] tensor.
Tensor slice_cols(Tape* tape, const Tensor& x, int c0, int c1);
Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b);

// ---- neural-net ops ----
// Cross-correlation (the usual deep-learning "convolution") of x[N,C,H,W]
// with w[F,C,k,k] plus bias[F]. H' = (H + 2p - k)/s + 1.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// Adjoint of conv2d: forward equals conv2d's input-gradient with the same
// weight (bit for bit; both call one routine). x[N,F,H,W], w[F,C,k,k], b[C].
// Output spatial size (H-1)s - 2p + k.
Tensor conv_transpose2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int pad);
Tensor fully_connected(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax(Tape* tape, const Tensor& x, int axis);
Tensor pixel_shuffle(Tape* tape, const Tensor& x, int r);
Tensor pixel_unshuffle(Tape* tape, const Tensor& x, int r);
Tensor avg_pool2d(Tape* tape, const Tensor& x, int k);
// Batched matmul: [N,P,Q] x [N,Q,R] -> [N,P,R].
Tensor bmm(Tape* tape, const Tensor& a, const Tensor& b);
Tensor l1_loss(Tape* tape, const Tensor& pred, const Tensor& target);

struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;  // population variance
};
BatchNormState make_batch_norm_state(int channels);
// Training mode standardizes with batch statistics over (N,H,W) and updates
// the running stats in place with `momentum`; inference mode uses the stored
// stats. Variance gets `eps` added before the square root.
Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum = 0.1, double eps = 1e-5);

// ---- statistics / attention primitives ----
// Per-sample per-channel spatial mean and epsilon-stabilized standard
// deviation (sqrt(population variance + eps)) of x[N,C,H,W]; both [N,C].
std::pair<Tensor, Tensor> instance_stats(Tape* tape, const Tensor& x, double eps = 1e-5);
// s[N,C] * (x - mean[N,C]) / std[N,C] + b[N,C], broadcast over H,W.
Tensor normalize_affine(Tape* tape, const Tensor& x, const Tensor& mean, const Tensor& stddev,
                        const Tensor& s, const Tensor& b);
// Channel Gram matrices: G[n] = F F^T / (C*H*W) with F the [C, H*W] unfolding.
Tensor gram_matrix(Tape* tape, const Tensor& x);
// lambda*o + x with a learnable scalar lambda (shape [1]).
Tensor scalar_residual(Tape* tape, const Tensor& lambda, const Tensor& o, const Tensor& x);
// Window-local attention: per target pixel, softmax over the window of
// -(q - k)^2 scores (summed over channels, zero-padded borders), aggregating
// raw x features with the shared per-pair weight. window odd, >= 3.
Tensor local_attention_window(Tape* tape, const Tensor& x, const Tensor& q, const Tensor& k,
                              int window);
// The per-target window weights the forward pass uses, [N, H*W, window^2];
// each row sums to 1. Inspection only.
Tensor local_attention_weight_map(const Tensor& x, const Tensor& q, const Tensor& k, int window);

// Largest element (forward value only; not differentiable, used for
// log-sum-exp shifts).
double max_value(const Tensor& x);

}  // namespace vsr
