#include "vsr/models.hpp"

#include <cmath>
#include <filesystem>

#include "vsr/tensor_io.hpp"

namespace vsr {
namespace {

int upsample_stages_for(int factor, const char* what) {
    int stages = 0, f = factor;
    while (f > 1) {
        if (f % 2 != 0) throw ConfigError(std::string(what) + ": scale must be a power of two");
        f /= 2;
        ++stages;
    }
    return stages;
}

std::string blob_filename(const std::string& name) {
    std::string fn = name;
    for (char& c : fn)
        if (c == '/') c = '_';
    return fn + ".rten";
}

}  // namespace

// ---- encoder ----

Tensor Encoder::forward(Tape* tape, const Tensor& x, bool training) {
    const int div = 1 << static_cast<int>(down.size());
    if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
        throw ShapeError("encoder input " + shape_str(x.shape()) + " not divisible by " +
                         std::to_string(div));
    Tensor h = stem.forward(tape, x);
    for (auto& g : body) h = g.forward(tape, h, training);
    for (auto& d : down)
        h = leaky_relu(tape, d.bn.forward(tape, d.conv.forward(tape, h), training), 0.2);
    return last.forward(tape, h);
}

void Encoder::collect(ParamList& out) const {
    stem.collect(out);
    for (const auto& g : body) g.collect(out);
    for (const auto& d : down) {
        d.conv.collect(out);
        d.bn.collect(out);
    }
    last.collect(out);
}

void Encoder::collect_buffers(ParamList& out) const {
    for (const auto& g : body) g.collect_buffers(out);
    for (const auto& d : down) d.bn.collect_buffers(out);
}

NetworkSpec Encoder::spec(const std::string& name) const {
    NetworkSpec s;
    s.name = name;
    s.layers.push_back(layer_spec("conv", {{"in", double(cfg.in_channels)},
                                           {"out", double(cfg.width)},
                                           {"k", 3},
                                           {"s", 1},
                                           {"p", 1}}));
    for (int i = 0; i < cfg.body_blocks; ++i)
        s.layers.push_back(layer_spec("resgroup", {{"c", double(cfg.width)}}));
    for (int i = 0; i < cfg.down_stages; ++i) {
        s.layers.push_back(layer_spec("conv", {{"in", double(cfg.width)},
                                               {"out", double(cfg.width)},
                                               {"k", 4},
                                               {"s", 2},
                                               {"p", 1}}));
        s.layers.push_back(layer_spec("bn", {{"c", double(cfg.width)}}));
        s.layers.push_back(layer_spec("lrelu", {{"slope", 0.2}}));
    }
    s.layers.push_back(layer_spec("conv", {{"in", double(cfg.width)},
                                           {"out", double(cfg.out_channels)},
                                           {"k", 3},
                                           {"s", 1},
                                           {"p", 1}}));
    return s;
}

Encoder make_encoder(const Rng& rng, const std::string& name, const EncoderConfig& cfg) {
    Encoder e;
    e.cfg = cfg;
    e.stem = make_conv(rng, name + ".stem", cfg.in_channels, cfg.width, 3, 1, 1);
    for (int i = 0; i < cfg.body_blocks; ++i)
        e.body.push_back(make_res_group(rng, name + ".body" + std::to_string(i), cfg.width));
    for (int i = 0; i < cfg.down_stages; ++i) {
        Encoder::Down d;
        d.conv = make_conv(rng, name + ".down" + std::to_string(i) + ".conv", cfg.width,
                           cfg.width, 4, 2, 1);
        d.bn = make_bn(name + ".down" + std::to_string(i) + ".bn", cfg.width);
        e.down.push_back(std::move(d));
    }
    e.last = make_conv(rng, name + ".last", cfg.width, cfg.out_channels, 3, 1, 1);
    return e;
}

// ---- generator ----

Tensor Generator::forward(Tape* tape, const Tensor& content, const Tensor& z, bool training) {
    if (content.dim(1) != cfg.content_channels)
        throw ShapeError("generator expects " + std::to_string(cfg.content_channels) +
                         " content channels, got " + shape_str(content.shape()));
    Tensor h = stem.forward(tape, content);
    for (auto& blk : blocks) {
        h = blk.g1.forward(tape, h, training);
        h = blk.g2.forward(tape, h, training);
        const AdaInParams p = style_params_from_latent(tape, z, blk.style_head);
        if (p.y_s.dim(1) != cfg.width)
            throw ShapeError("style head emits " + std::to_string(p.y_s.dim(1)) +
                             " channels, feature map has " + std::to_string(cfg.width));
        h = adain(tape, h, p);
    }
    h = middle.forward(tape, h);
    for (auto& up : ups) h = pixel_shuffle(tape, up.forward(tape, h), 2);
    return last.forward(tape, h);
}

void Generator::collect(ParamList& out) const {
    stem.collect(out);
    for (const auto& blk : blocks) {
        blk.g1.collect(out);
        blk.g2.collect(out);
        blk.style_head.collect(out);
    }
    middle.collect(out);
    for (const auto& up : ups) up.collect(out);
    last.collect(out);
}

void Generator::collect_buffers(ParamList& out) const {
    for (const auto& blk : blocks) {
        blk.g1.collect_buffers(out);
        blk.g2.collect_buffers(out);
    }
}

NetworkSpec Generator::spec(const std::string& name) const {
    NetworkSpec s;
    s.name = name;
    s.layers.push_back(layer_spec("conv", {{"in", double(cfg.content_channels)},
                                           {"out", double(cfg.width)},
                                           {"k", 3},
                                           {"s", 1},
                                           {"p", 1}}));
    for (int i = 0; i < cfg.groups; ++i) {
        s.layers.push_back(layer_spec("resgroup", {{"c", double(cfg.width)}}));
        s.layers.push_back(layer_spec("resgroup", {{"c", double(cfg.width)}}));
        s.layers.push_back(
            layer_spec("adain", {{"c", double(cfg.width)}, {"d", double(cfg.d_style)}}));
    }
    s.layers.push_back(layer_spec("conv", {{"in", double(cfg.width)},
                                           {"out", double(cfg.width)},
                                           {"k", 3},
                                           {"s", 1},
                                           {"p", 1}}));
    for (int i = 0; i < cfg.up_stages; ++i) {
        s.layers.push_back(layer_spec("conv", {{"in", double(cfg.width)},
                                               {"out", double(4 * cfg.width)},
                                               {"k", 3},
                                               {"s", 1},
                                               {"p", 1}}));
        s.layers.push_back(layer_spec("pixel_shuffle", {{"r", 2}}));
    }
    s.layers.push_back(layer_spec(
        "conv", {{"in", double(cfg.width)}, {"out", 3}, {"k", 3}, {"s", 1}, {"p", 1}}));
    return s;
}

Generator make_generator(const Rng& rng, const std::string& name, const GeneratorConfig& cfg) {
    Generator g;
    g.cfg = cfg;
    g.stem = make_conv(rng, name + ".stem", cfg.content_channels, cfg.width, 3, 1, 1);
    for (int i = 0; i < cfg.groups; ++i) {
        Generator::Block blk;
        const std::string base = name + ".res" + std::to_string(i + 1);
        blk.g1 = make_res_group(rng, base + ".a", cfg.width);
        blk.g2 = make_res_group(rng, base + ".b", cfg.width);
        // near-identity modulation at init, still z-sensitive
        blk.style_head = make_linear_scaled(rng, base + ".style_head", cfg.d_style,
                                            2 * cfg.width, 0.01);
        g.blocks.push_back(std::move(blk));
    }
    g.middle = make_conv(rng, name + ".middle", cfg.width, cfg.width, 3, 1, 1);
    for (int i = 0; i < cfg.up_stages; ++i)
        g.ups.push_back(make_conv(rng, name + ".up" + std::to_string(i), cfg.width,
                                  4 * cfg.width, 3, 1, 1));
    g.last = make_conv(rng, name + ".last", cfg.width, 3, 3, 1, 1);
    return g;
}

// ---- styleVAE ----

StyleVaeConfig stylevae_config(int d_style, int enc_width, int enc_body_blocks, int gen_width,
                               int scale_factor) {
    if (scale_factor != 2 && scale_factor != 4 && scale_factor != 8)
        throw ConfigError("scale_factor must be one of {2,4,8}");
    StyleVaeConfig cfg;
    cfg.d_style = d_style;
    cfg.e_lr = {3, enc_width, enc_body_blocks, 2, 256};
    cfg.e_hr = {3, enc_width, enc_body_blocks, 4, 256};
    cfg.g.content_channels = 256;
    cfg.g.width = gen_width;
    cfg.g.groups = 4;
    cfg.g.d_style = d_style;
    // content sits at HR/16; the generated LR at HR/scale
    cfg.g.up_stages = upsample_stages_for(16 / scale_factor, "generator");
    return cfg;
}

StyleCode StyleVae::encode_style(Tape* tape, const Tensor& x_lr, const Tensor& eps,
                                 bool training) {
    Tensor feat = e_lr.forward(tape, x_lr, training);
    Tensor pooled = spatial_mean(tape, feat);
    StyleCode code;
    code.mu = head_mu.forward(tape, pooled);
    code.log_var = head_logvar.forward(tape, pooled);
    code.z = reparameterize(tape, code.mu, code.log_var, eps);
    return code;
}

Tensor StyleVae::encode_content(Tape* tape, const Tensor& x_hr, bool training) {
    return e_hr.forward(tape, x_hr, training);
}

Tensor StyleVae::generate(Tape* tape, const Tensor& content, const Tensor& z, bool training) {
    return g.forward(tape, content, z, training);
}

void StyleVae::collect(ParamList& out) const {
    e_lr.collect(out);
    head_mu.collect(out);
    head_logvar.collect(out);
    e_hr.collect(out);
    g.collect(out);
}

void StyleVae::collect_buffers(ParamList& out) const {
    e_lr.collect_buffers(out);
    e_hr.collect_buffers(out);
    g.collect_buffers(out);
}

StyleVae make_stylevae(const Rng& rng, const StyleVaeConfig& cfg) {
    StyleVae v;
    v.cfg = cfg;
    v.e_lr = make_encoder(rng, "e_lr", cfg.e_lr);
    v.head_mu = make_linear_scaled(rng, "e_lr.head_mu", cfg.e_lr.out_channels, cfg.d_style, 0.01);
    v.head_logvar =
        make_linear_scaled(rng, "e_lr.head_logvar", cfg.e_lr.out_channels, cfg.d_style, 0.01);
    v.e_hr = make_encoder(rng, "e_hr", cfg.e_hr);
    v.g = make_generator(rng, "g", cfg.g);
    return v;
}

// ---- SR network ----

Tensor SrNetwork::forward(Tape* tape, const Tensor& lr) const {
    Tensor h = stem.forward(tape, lr);
    for (const auto& b : garbs) h = b.forward(tape, h);
    for (const auto& b : larbs) h = b.forward(tape, h);
    h = middle.forward(tape, h);
    for (const auto& up : ups) h = pixel_shuffle(tape, up.forward(tape, h), 2);
    return last.forward(tape, h);
}

void SrNetwork::collect(ParamList& out) const {
    stem.collect(out);
    for (const auto& b : garbs) b.collect(out);
    for (const auto& b : larbs) b.collect(out);
    middle.collect(out);
    for (const auto& up : ups) up.collect(out);
    last.collect(out);
}

NetworkSpec SrNetwork::spec(const std::string& name) const {
    NetworkSpec s;
    s.name = name;
    s.layers.push_back(layer_spec("conv", {{"in", double(cfg.in_channels)},
                                           {"out", double(cfg.width)},
                                           {"k", 3},
                                           {"s", 1},
                                           {"p", 1}}));
    for (int i = 0; i < cfg.garbs; ++i)
        s.layers.push_back(layer_spec(cfg.attention ? "garb" : "rb", {{"c", double(cfg.width)}}));
    for (int i = 0; i < cfg.larbs; ++i)
        s.layers.push_back(cfg.attention
                               ? layer_spec("larb", {{"c", double(cfg.width)},
                                                     {"window", double(cfg.la_window)}})
                               : layer_spec("rb", {{"c", double(cfg.width)}}));
    s.layers.push_back(layer_spec("conv", {{"in", double(cfg.width)},
                                           {"out", double(cfg.width)},
                                           {"k", 3},
                                           {"s", 1},
                                           {"p", 1}}));
    for (int i = 0; i < upsample_stages_for(cfg.scale, "sr"); ++i) {
        s.layers.push_back(layer_spec("conv", {{"in", double(cfg.width)},
                                               {"out", double(4 * cfg.width)},
                                               {"k", 3},
                                               {"s", 1},
                                               {"p", 1}}));
        s.layers.push_back(layer_spec("pixel_shuffle", {{"r", 2}}));
    }
    s.layers.push_back(layer_spec(
        "conv", {{"in", double(cfg.width)}, {"out", 3}, {"k", 3}, {"s", 1}, {"p", 1}}));
    return s;
}

SrNetwork make_sr_network(const Rng& rng, const SrConfig& cfg) {
    const int stages = upsample_stages_for(cfg.scale, "sr");
    SrNetwork net;
    net.cfg = cfg;
    net.stem = make_conv(rng, "sr.stem", cfg.in_channels, cfg.width, 3, 1, 1);
    for (int i = 0; i < cfg.garbs; ++i)
        net.garbs.push_back(
            make_garb(rng, "sr.garb" + std::to_string(i), cfg.width, cfg.attention));
    for (int i = 0; i < cfg.larbs; ++i)
        net.larbs.push_back(make_larb(rng, "sr.larb" + std::to_string(i), cfg.width,
                                      cfg.la_window, cfg.attention));
    net.middle = make_conv(rng, "sr.middle", cfg.width, cfg.width, 3, 1, 1);
    for (int i = 0; i < stages; ++i)
        net.ups.push_back(
            make_conv(rng, "sr.up" + std::to_string(i), cfg.width, 4 * cfg.width, 3, 1, 1));
    net.last = make_conv(rng, "sr.last", cfg.width, 3, 3, 1, 1);
    return net;
}

// ---- styleVAE objective ----

StyleVaeLossParts stylevae_loss(Tape* tape, StyleVae& nets, const Tensor& x_lr,
                                const Tensor& x_hr, const FeatureExtractor& extractor,
                                const StatFn& T, const LossWeights& w, const Tensor& eps,
                                RngStream& perm_stream, bool training) {
    if (x_lr.dim(0) != x_hr.dim(0))
        throw ShapeError("stylevae_loss: LR and HR batch sizes differ");

    StyleVaeLossParts parts;
    parts.code = nets.encode_style(tape, x_lr, eps, training);
    Tensor content = nets.encode_content(tape, x_hr, training);
    parts.y_lr = nets.generate(tape, content, parts.code.z, training);

    parts.kl = kl_divergence(tape, parts.code.mu, parts.code.log_var);

    const int resize = x_hr.dim(2) / parts.y_lr.dim(2);
    Tensor hr_small = avg_pool2d(tape, x_hr, resize);
    Tensor c_loss = content_loss(tape, parts.y_lr, hr_small, extractor, w.content_stage);
    Tensor s_loss = style_loss(tape, parts.y_lr, x_lr, extractor, w.style_weights);
    parts.style = combined_style_objective(tape, c_loss, s_loss, w.alpha, w.beta);

    Tensor mi_loss = mi_maximization_loss(tape, T, x_lr, parts.y_lr, perm_stream);
    parts.mi_nu = scale(tape, mi_loss, -1.0);

    parts.total = add(tape, add(tape, scale(tape, parts.kl, w.lambda1),
                                scale(tape, parts.style, w.lambda2)),
                      scale(tape, mi_loss, w.lambda3));
    return parts;
}

// ---- parameter blobs ----

void save_params_rten(const std::string& dir, const ParamList& params) {
    std::filesystem::create_directories(dir);
    for (const auto& p : params)
        save_rten((std::filesystem::path(dir) / blob_filename(p.name)).string(), p.tensor);
}

void load_params_rten(const std::string& dir, ParamList& params) {
    for (auto& p : params) {
        const auto path = std::filesystem::path(dir) / blob_filename(p.name);
        Tensor loaded = load_rten(path.string());
        if (loaded.shape() != p.tensor.shape())
            throw IoError("checkpoint tensor '" + p.name + "' has shape " +
                          shape_str(loaded.shape()) + ", expected " +
                          shape_str(p.tensor.shape()));
        p.tensor.values() = loaded.values();
    }
}

}  // namespace vsr
