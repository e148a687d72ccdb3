#include "vsr/losses.hpp"

namespace vsr {
namespace {
constexpr int kWidths[FeatureExtractor::kStages + 1] = {3, 16, 32, 64, 128};
}

FeatureExtractor::FeatureExtractor(const Rng& rng) {
    for (int s = 0; s < kStages; ++s) {
        convs_[s] = make_conv(rng, "extractor.stage" + std::to_string(s + 1), kWidths[s],
                              kWidths[s + 1], 3, 1, 1);
        convs_[s].w.set_requires_grad(false);
        convs_[s].b.set_requires_grad(false);
    }
}

std::vector<Tensor> FeatureExtractor::stages(Tape* tape, const Tensor& x) const {
    std::vector<Tensor> out;
    out.reserve(kStages);
    Tensor h = x;
    for (int s = 0; s < kStages; ++s) {
        h = avg_pool2d(tape, leaky_relu(tape, convs_[s].forward(tape, h), 0.2), 2);
        out.push_back(h);
    }
    return out;
}

Tensor FeatureExtractor::stage(Tape* tape, const Tensor& x, int index) const {
    if (index < 1 || index > kStages)
        throw ConfigError("feature stage must be in [1,4], got " + std::to_string(index));
    Tensor h = x;
    for (int s = 0; s < index; ++s)
        h = avg_pool2d(tape, leaky_relu(tape, convs_[s].forward(tape, h), 0.2), 2);
    return h;
}

Tensor content_loss(Tape* tape, const Tensor& y_lr, const Tensor& x_hr_resized,
                    const FeatureExtractor& extractor, int stage_j) {
    check_same_shape(y_lr, x_hr_resized, "content_loss");
    Tensor fy = extractor.stage(tape, y_lr, stage_j);
    Tensor fx = extractor.stage(tape, x_hr_resized, stage_j);
    Tensor d = sub(tape, fy, fx);
    return mean(tape, mul(tape, d, d));
}

Tensor style_loss(Tape* tape, const Tensor& y_lr, const Tensor& x_lr_real,
                  const FeatureExtractor& extractor, const std::vector<double>& stage_weights) {
    check_same_shape(y_lr, x_lr_real, "style_loss");
    if (stage_weights.size() != FeatureExtractor::kStages)
        throw ConfigError("style loss expects one weight per extractor stage");
    const auto fy = extractor.stages(tape, y_lr);
    const auto fx = extractor.stages(tape, x_lr_real);
    Tensor total = Tensor::scalar(0.0);
    for (int s = 0; s < FeatureExtractor::kStages; ++s) {
        if (stage_weights[s] == 0.0) continue;
        Tensor d = sub(tape, gram_matrix(tape, fy[s]), gram_matrix(tape, fx[s]));
        total = add(tape, total, scale(tape, mean(tape, mul(tape, d, d)), stage_weights[s]));
    }
    return total;
}

Tensor combined_style_objective(Tape* tape, const Tensor& content, const Tensor& style,
                                double alpha, double beta) {
    return add(tape, scale(tape, content, alpha), scale(tape, style, beta));
}

}  // namespace vsr
