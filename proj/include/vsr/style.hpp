#pragma once

#include "vsr/layers.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

namespace vsr {

// Latent style code: posterior parameters and the sampled vector.
struct StyleCode {
    Tensor mu;       // [N, d_style]
    Tensor log_var;  // [N, d_style]
    Tensor z;        // [N, d_style], mu + exp(log_var/2) * eps
};

struct AdaInParams {
    Tensor y_s;  // [N, C] scale
    Tensor y_b;  // [N, C] bias
};

// Replaces the per-channel spatial statistics of x with (y_s, y_b):
// y_s * (x - mu(x)) / sigma(x) + y_b, sigma stabilized by eps inside the
// square root.
Tensor adain(Tape* tape, const Tensor& x, const AdaInParams& params, double eps = 1e-5);

// One FC head produces a [N, 2C] row; the first half becomes y_s = 1 + raw
// (identity modulation at zero weights), the second half y_b.
AdaInParams style_params_from_latent(Tape* tape, const Tensor& z, const LinearLayer& head);

// z = mu + exp(log_var / 2) * eps. `eps` must be a pre-drawn standard-normal
// tensor of the same shape; gradients flow to mu and log_var only.
Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& log_var, const Tensor& eps);

// Convenience: draws eps from the stream, then reparameterizes.
Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& log_var, RngStream& stream);

// KL(q || N(0,I)) = -1/(2N) sum_ij (1 + log_var - mu^2 - exp(log_var)).
// Nonnegative, zero exactly at (mu, log_var) = (0, 0).
Tensor kl_divergence(Tape* tape, const Tensor& mu, const Tensor& log_var);

}  // namespace vsr
