#pragma once

#include <string>
#include <vector>

#include "vsr/attention.hpp"
#include "vsr/layers.hpp"
#include "vsr/losses.hpp"
#include "vsr/mine.hpp"
#include "vsr/netspec.hpp"
#include "vsr/style.hpp"

namespace vsr {

// ---- encoders (E_LR / E_HR) ----

struct EncoderConfig {
    int in_channels = 3;
    int width = 64;
    int body_blocks = 8;   // residual {conv,BN,lrelu,conv,BN} groups
    int down_stages = 2;   // stride-2 conv[k4,p1] + BN + lrelu each
    int out_channels = 256;
};

struct Encoder {
    EncoderConfig cfg;
    ConvLayer stem;
    std::vector<ResGroup> body;
    struct Down {
        ConvLayer conv;
        BnLayer bn;
    };
    std::vector<Down> down;
    ConvLayer last;

    // [N,in,H,W] -> [N,out, H/2^stages, W/2^stages]
    Tensor forward(Tape* tape, const Tensor& x, bool training);
    void collect(ParamList& out) const;
    void collect_buffers(ParamList& out) const;
    NetworkSpec spec(const std::string& name) const;
};
Encoder make_encoder(const Rng& rng, const std::string& name, const EncoderConfig& cfg);

// ---- generator ----

struct GeneratorConfig {
    int content_channels = 256;
    int width = 64;
    int groups = 4;  // Res_1..Res_4, one AdaIN site each
    int d_style = 128;
    int up_stages = 2;  // each: conv to 4*width, PixelShuffle(2)
};

struct Generator {
    GeneratorConfig cfg;
    ConvLayer stem;
    struct Block {
        ResGroup g1, g2;
        LinearLayer style_head;  // d_style -> 2*width
    };
    std::vector<Block> blocks;
    ConvLayer middle;
    std::vector<ConvLayer> ups;
    ConvLayer last;

    Tensor forward(Tape* tape, const Tensor& content, const Tensor& z, bool training);
    void collect(ParamList& out) const;
    void collect_buffers(ParamList& out) const;
    NetworkSpec spec(const std::string& name) const;
};
Generator make_generator(const Rng& rng, const std::string& name, const GeneratorConfig& cfg);

// ---- styleVAE ----

struct StyleVaeConfig {
    EncoderConfig e_lr;      // 2 downsample stages
    EncoderConfig e_hr;      // 4 downsample stages
    GeneratorConfig g;
    int d_style = 128;
};
// Desk-scale vs paper-scale geometry is chosen by the caller via widths and
// block counts; scale_factor fixes the generator's upsample stages.
StyleVaeConfig stylevae_config(int d_style, int enc_width, int enc_body_blocks, int gen_width,
                               int scale_factor);

struct StyleVae {
    StyleVaeConfig cfg;
    Encoder e_lr;
    LinearLayer head_mu, head_logvar;  // pooled 256-vector -> d_style
    Encoder e_hr;
    Generator g;

    // Style branch: E_LR features, pooled, two FC heads, reparameterized with
    // the supplied pre-drawn eps.
    StyleCode encode_style(Tape* tape, const Tensor& x_lr, const Tensor& eps, bool training);
    Tensor encode_content(Tape* tape, const Tensor& x_hr, bool training);
    Tensor generate(Tape* tape, const Tensor& content, const Tensor& z, bool training);

    void collect(ParamList& out) const;
    void collect_buffers(ParamList& out) const;
};
StyleVae make_stylevae(const Rng& rng, const StyleVaeConfig& cfg);

// ---- SR network ----

struct SrConfig {
    int in_channels = 3;
    int width = 64;
    int garbs = 8;
    int larbs = 8;
    int scale = 4;  // power of two in {2,4,8}
    int la_window = 7;
    bool attention = true;
};

struct SrNetwork {
    SrConfig cfg;
    ConvLayer stem;
    std::vector<Garb> garbs;
    std::vector<Larb> larbs;
    ConvLayer middle;
    std::vector<ConvLayer> ups;
    ConvLayer last;

    Tensor forward(Tape* tape, const Tensor& lr) const;
    void collect(ParamList& out) const;
    NetworkSpec spec(const std::string& name) const;
};
SrNetwork make_sr_network(const Rng& rng, const SrConfig& cfg);

// ---- styleVAE objective ----

struct LossWeights {
    double lambda1 = 0.01, lambda2 = 1.0, lambda3 = 0.1;
    double alpha = 1.0, beta = 0.1;
    int content_stage = 3;
    std::vector<double> style_weights = {1.0, 1.0, 1.0, 1.0};
};

struct StyleVaeLossParts {
    Tensor total;   // lambda1*kl + lambda2*style + lambda3*(-nu)
    Tensor kl;
    Tensor style;   // alpha*content + beta*gram-style
    Tensor mi_nu;   // the nu estimate itself
    Tensor y_lr;    // generated batch
    StyleCode code;
};

// Full Eq.-8 objective for one unpaired batch. `eps` is the pre-drawn noise
// for the reparameterization; the marginal permutation for the MI term comes
// from `perm_stream`. T is evaluated, not updated.
StyleVaeLossParts stylevae_loss(Tape* tape, StyleVae& nets, const Tensor& x_lr,
                                const Tensor& x_hr, const FeatureExtractor& extractor,
                                const StatFn& T, const LossWeights& w, const Tensor& eps,
                                RngStream& perm_stream, bool training);

// ---- named-parameter blob IO (checkpoint payloads) ----

// One RTEN file per entry, file name "<name>.rten" with '/' replaced by '_'.
void save_params_rten(const std::string& dir, const ParamList& params);
// Loads by name into the existing tensors; shapes must match.
void load_params_rten(const std::string& dir, ParamList& params);

}  // namespace vsr
