#pragma once

#include <string>
#include <vector>

#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

namespace vsr {

struct NamedParam {
    std::string name;
    Tensor tensor;
};
// Learnable parameters in registration order; the optimizer walks this list,
// so its order is part of the determinism contract.
using ParamList = std::vector<NamedParam>;

void add_param(ParamList& list, const std::string& name, const Tensor& t);

// He-style normal init, std = sqrt(2 / fan_in), from the per-parameter stream
// "init/<name>" so adding parameters never shifts other draws.
Tensor he_normal(const Rng& rng, const std::string& name, const Shape& shape, std::size_t fan_in);
Tensor normal_init(const Rng& rng, const std::string& name, const Shape& shape, double stddev);

struct ConvLayer {
    std::string name;
    Tensor w, b;
    int stride = 1;
    int pad = 1;

    Tensor forward(Tape* tape, const Tensor& x) const { return conv2d(tape, x, w, b, stride, pad); }
    void collect(ParamList& out) const;
};
ConvLayer make_conv(const Rng& rng, const std::string& name, int in_ch, int out_ch, int k,
                    int stride, int pad);
// 1x1 projection without bias (the bias tensor stays zero and unregistered).
ConvLayer make_proj1x1(const Rng& rng, const std::string& name, int in_ch, int out_ch);

struct LinearLayer {
    std::string name;
    Tensor w, b;

    Tensor forward(Tape* tape, const Tensor& x) const { return fully_connected(tape, x, w, b); }
    void collect(ParamList& out) const;
};
LinearLayer make_linear(const Rng& rng, const std::string& name, int in_dim, int out_dim);
LinearLayer make_linear_scaled(const Rng& rng, const std::string& name, int in_dim, int out_dim,
                               double stddev);

struct BnLayer {
    std::string name;
    Tensor gamma, beta;
    BatchNormState state;

    Tensor forward(Tape* tape, const Tensor& x, bool training) {
        return batch_norm(tape, x, gamma, beta, state, training);
    }
    void collect(ParamList& out) const;
    void collect_buffers(ParamList& out) const;
};
BnLayer make_bn(const std::string& name, int channels);

// {conv, BN, LeakyReLU, conv, BN} wrapped in a skip connection.
struct ResGroup {
    ConvLayer c1, c2;
    BnLayer b1, b2;
    double slope = 0.2;

    Tensor forward(Tape* tape, const Tensor& x, bool training) {
        Tensor h = b1.forward(tape, c1.forward(tape, x), training);
        h = leaky_relu(tape, h, slope);
        h = b2.forward(tape, c2.forward(tape, h), training);
        return add(tape, x, h);
    }
    void collect(ParamList& out) const;
    void collect_buffers(ParamList& out) const;
};
ResGroup make_res_group(const Rng& rng, const std::string& name, int channels);

}  // namespace vsr
