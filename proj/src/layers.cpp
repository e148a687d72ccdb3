#include "vsr/layers.hpp"

#include <cmath>

namespace vsr {

void add_param(ParamList& list, const std::string& name, const Tensor& t) {
    list.push_back({name, t});
}

Tensor he_normal(const Rng& rng, const std::string& name, const Shape& shape,
                 std::size_t fan_in) {
    return normal_init(rng, name, shape, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor normal_init(const Rng& rng, const std::string& name, const Shape& shape, double stddev) {
    Tensor t = Tensor::zeros(shape);
    auto stream = rng.stream("init/" + name);
    stream.fill_gaussian(t, 0.0, stddev);
    return t;
}

void ConvLayer::collect(ParamList& out) const {
    add_param(out, name + ".weight", w);
    if (b.requires_grad()) add_param(out, name + ".bias", b);
}

ConvLayer make_conv(const Rng& rng, const std::string& name, int in_ch, int out_ch, int k,
                    int stride, int pad) {
    ConvLayer layer;
    layer.name = name;
    layer.w = he_normal(rng, name + ".weight", {out_ch, in_ch, k, k},
                        static_cast<std::size_t>(in_ch) * k * k);
    layer.w.set_requires_grad(true);
    layer.b = Tensor::zeros({out_ch});
    layer.b.set_requires_grad(true);
    layer.stride = stride;
    layer.pad = pad;
    return layer;
}

ConvLayer make_proj1x1(const Rng& rng, const std::string& name, int in_ch, int out_ch) {
    ConvLayer layer;
    layer.name = name;
    layer.w = he_normal(rng, name + ".weight", {out_ch, in_ch, 1, 1},
                        static_cast<std::size_t>(in_ch));
    layer.w.set_requires_grad(true);
    layer.b = Tensor::zeros({out_ch});  // fixed at zero
    layer.stride = 1;
    layer.pad = 0;
    return layer;
}

void LinearLayer::collect(ParamList& out) const {
    add_param(out, name + ".weight", w);
    add_param(out, name + ".bias", b);
}

LinearLayer make_linear(const Rng& rng, const std::string& name, int in_dim, int out_dim) {
    LinearLayer layer;
    layer.name = name;
    layer.w = he_normal(rng, name + ".weight", {in_dim, out_dim},
                        static_cast<std::size_t>(in_dim));
    layer.w.set_requires_grad(true);
    layer.b = Tensor::zeros({out_dim});
    layer.b.set_requires_grad(true);
    return layer;
}

LinearLayer make_linear_scaled(const Rng& rng, const std::string& name, int in_dim, int out_dim,
                               double stddev) {
    LinearLayer layer;
    layer.name = name;
    layer.w = normal_init(rng, name + ".weight", {in_dim, out_dim}, stddev);
    layer.w.set_requires_grad(true);
    layer.b = Tensor::zeros({out_dim});
    layer.b.set_requires_grad(true);
    return layer;
}

void BnLayer::collect(ParamList& out) const {
    add_param(out, name + ".gamma", gamma);
    add_param(out, name + ".beta", beta);
}

void BnLayer::collect_buffers(ParamList& out) const {
    add_param(out, name + ".running_mean", state.running_mean);
    add_param(out, name + ".running_var", state.running_var);
}

BnLayer make_bn(const std::string& name, int channels) {
    BnLayer layer;
    layer.name = name;
    layer.gamma = Tensor::full({channels}, 1.0);
    layer.gamma.set_requires_grad(true);
    layer.beta = Tensor::zeros({channels});
    layer.beta.set_requires_grad(true);
    layer.state = make_batch_norm_state(channels);
    return layer;
}

void ResGroup::collect(ParamList& out) const {
    c1.collect(out);
    b1.collect(out);
    c2.collect(out);
    b2.collect(out);
}

void ResGroup::collect_buffers(ParamList& out) const {
    b1.collect_buffers(out);
    b2.collect_buffers(out);
}

ResGroup make_res_group(const Rng& rng, const std::string& name, int channels) {
    ResGroup g;
    g.c1 = make_conv(rng, name + ".conv1", channels, channels, 3, 1, 1);
    g.b1 = make_bn(name + ".bn1", channels);
    g.c2 = make_conv(rng, name + ".conv2", channels, channels, 3, 1, 1);
    g.b2 = make_bn(name + ".bn2", channels);
    return g;
}

}  // namespace vsr
