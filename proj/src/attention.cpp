#include "vsr/attention.hpp"

namespace vsr {

void GlobalAttentionWeights::collect(ParamList& out) const {
    w_f.collect(out);
    w_g.collect(out);
    w_h.collect(out);
    w_v.collect(out);
    add_param(out, w_f.name.substr(0, w_f.name.rfind('.')) + ".lambda", lambda);
}

GlobalAttentionWeights make_global_attention(const Rng& rng, const std::string& name,
                                             int channels) {
    if (channels % 8 != 0)
        throw ShapeError("global attention needs channels divisible by 8, got " +
                         std::to_string(channels));
    GlobalAttentionWeights w;
    w.w_f = make_proj1x1(rng, name + ".f", channels, channels / 8);
    w.w_g = make_proj1x1(rng, name + ".g", channels, channels / 8);
    w.w_h = make_proj1x1(rng, name + ".h", channels, channels / 2);
    w.w_v = make_proj1x1(rng, name + ".v", channels / 2, channels);
    w.lambda = Tensor::zeros({1});
    w.lambda.set_requires_grad(true);
    return w;
}

namespace {

Tensor attention_beta(Tape* tape, const Tensor& x, const GlobalAttentionWeights& w) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    if (c % 8 != 0)
        throw ShapeError("global attention input channels must be divisible by 8");
    const int hw = h * wd;
    const int c8 = c / 8;
    Tensor f = reshape(tape, w.w_f.forward(tape, x), {n, c8, hw});
    Tensor g = reshape(tape, w.w_g.forward(tape, x), {n, c8, hw});
    // scores[n,i,j] = f_i . g_j; beta normalizes over i (the attended-to
    // position), so each column sums to 1.
    Tensor scores = bmm(tape, transpose_last2(tape, f), g);
    return softmax(tape, scores, 1);
}

}  // namespace

Tensor global_attention(Tape* tape, const Tensor& x, const GlobalAttentionWeights& w) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int hw = h * wd;
    const int c2 = c / 2;
    Tensor beta = attention_beta(tape, x, w);
    Tensor hproj = reshape(tape, w.w_h.forward(tape, x), {n, c2, hw});
    Tensor o = bmm(tape, hproj, beta);
    Tensor v = w.w_v.forward(tape, reshape(tape, o, {n, c2, h, wd}));
    return scalar_residual(tape, w.lambda, v, x);
}

Tensor global_attention_map(const Tensor& x, const GlobalAttentionWeights& w) {
    return attention_beta(nullptr, x, w);
}

void LocalAttentionWeights::collect(ParamList& out) const {
    w_q.collect(out);
    w_k.collect(out);
}

LocalAttentionWeights make_local_attention(const Rng& rng, const std::string& name, int channels,
                                           int window) {
    LocalAttentionWeights w;
    w.w_q = make_proj1x1(rng, name + ".q", channels, channels);
    w.w_k = make_proj1x1(rng, name + ".k", channels, channels);
    w.window = window;
    return w;
}

Tensor local_attention(Tape* tape, const Tensor& x, const LocalAttentionWeights& w) {
    Tensor q = w.w_q.forward(tape, x);
    Tensor k = w.w_k.forward(tape, x);
    return local_attention_window(tape, x, q, k, w.window);
}

Tensor Garb::forward(Tape* tape, const Tensor& x) const {
    Tensor inner = c2.forward(tape, leaky_relu(tape, c1.forward(tape, x), slope));
    if (use_attention) inner = global_attention(tape, inner, ga);
    return add(tape, x, inner);
}

void Garb::collect(ParamList& out) const {
    c1.collect(out);
    c2.collect(out);
    if (use_attention) ga.collect(out);
}

Garb make_garb(const Rng& rng, const std::string& name, int channels, bool use_attention) {
    Garb b;
    b.c1 = make_conv(rng, name + ".conv1", channels, channels, 3, 1, 1);
    b.c2 = make_conv(rng, name + ".conv2", channels, channels, 3, 1, 1);
    b.use_attention = use_attention;
    if (use_attention) b.ga = make_global_attention(rng, name + ".ga", channels);
    return b;
}

Tensor Larb::forward(Tape* tape, const Tensor& x) const {
    Tensor inner = c2.forward(tape, leaky_relu(tape, c1.forward(tape, x), slope));
    if (use_attention) inner = local_attention(tape, inner, la);
    return add(tape, x, inner);
}

void Larb::collect(ParamList& out) const {
    c1.collect(out);
    c2.collect(out);
    if (use_attention) la.collect(out);
}

Larb make_larb(const Rng& rng, const std::string& name, int channels, int window,
               bool use_attention) {
    Larb b;
    b.c1 = make_conv(rng, name + ".conv1", channels, channels, 3, 1, 1);
    b.c2 = make_conv(rng, name + ".conv2", channels, channels, 3, 1, 1);
    b.use_attention = use_attention;
    if (use_attention) b.la = make_local_attention(rng, name + ".la", channels, window);
    return b;
}

}  // namespace vsr
