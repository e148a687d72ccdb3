#pragma once

#include "vsr/layers.hpp"
#include "vsr/ops.hpp"

namespace vsr {

// Self-attention over all spatial positions. f and g project to C/8 channels,
// h to C/2, v back to C (1x1 convs, no bias); lambda starts at 0 so the block
// is the identity at init.
struct GlobalAttentionWeights {
    ConvLayer w_f, w_g, w_h, w_v;
    Tensor lambda;  // [1]

    void collect(ParamList& out) const;
};
GlobalAttentionWeights make_global_attention(const Rng& rng, const std::string& name,
                                             int channels);
Tensor global_attention(Tape* tape, const Tensor& x, const GlobalAttentionWeights& w);
// The [N, HW, HW] attention map the forward pass applies; every column sums
// to 1. Inspection only (no tape).
Tensor global_attention_map(const Tensor& x, const GlobalAttentionWeights& w);

// Window-local relational attention; scores are -(q - k)^2 accumulated over
// channels, values are the block's raw input features.
struct LocalAttentionWeights {
    ConvLayer w_q, w_k;
    int window = 7;

    void collect(ParamList& out) const;
};
LocalAttentionWeights make_local_attention(const Rng& rng, const std::string& name, int channels,
                                           int window);
Tensor local_attention(Tape* tape, const Tensor& x, const LocalAttentionWeights& w);

// Residual attention blocks of the SR network:
//   GARB: x + GA(conv(lrelu(conv(x))))
//   LARB: x + LA(conv(lrelu(conv(x))))
// When built without attention the inner stack is kept and GA/LA drop away,
// which is the ablation baseline.
struct Garb {
    ConvLayer c1, c2;
    GlobalAttentionWeights ga;
    bool use_attention = true;
    double slope = 0.2;

    Tensor forward(Tape* tape, const Tensor& x) const;
    void collect(ParamList& out) const;
};
Garb make_garb(const Rng& rng, const std::string& name, int channels, bool use_attention);

struct Larb {
    ConvLayer c1, c2;
    LocalAttentionWeights la;
    bool use_attention = true;
    double slope = 0.2;

    Tensor forward(Tape* tape, const Tensor& x) const;
    void collect(ParamList& out) const;
};
Larb make_larb(const Rng& rng, const std::string& name, int channels, int window,
               bool use_attention);

}  // namespace vsr
