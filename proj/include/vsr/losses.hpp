#pragma once

#include <array>
#include <vector>

#include "vsr/layers.hpp"
#include "vsr/ops.hpp"

namespace vsr {

// Fixed random-feature stack standing in for a pretrained perceptual network:
// four stages of {conv 3x3, LeakyReLU(0.2), avg-pool 2x2} with channels
// 16/32/64/128. Weights are drawn once from the seed and frozen; the same
// seed always yields the same features.
class FeatureExtractor {
public:
    static constexpr int kStages = 4;

    FeatureExtractor() = default;
    explicit FeatureExtractor(const Rng& rng);

    // Outputs of all four stages (after pooling). Input spatial size must be
    // divisible by 16.
    std::vector<Tensor> stages(Tape* tape, const Tensor& x) const;
    Tensor stage(Tape* tape, const Tensor& x, int index) const;

private:
    std::array<ConvLayer, kStages> convs_;
};

// Mean squared distance between stage-J features (J is 1-based).
Tensor content_loss(Tape* tape, const Tensor& y_lr, const Tensor& x_hr_resized,
                    const FeatureExtractor& extractor, int stage_j);

// Weighted sum over stages of mean squared Gram-matrix distances.
Tensor style_loss(Tape* tape, const Tensor& y_lr, const Tensor& x_lr_real,
                  const FeatureExtractor& extractor, const std::vector<double>& stage_weights);

// alpha * content + beta * style.
Tensor combined_style_objective(Tape* tape, const Tensor& content, const Tensor& style,
                                double alpha, double beta);

}  // namespace vsr
