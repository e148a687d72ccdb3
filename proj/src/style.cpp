#include "vsr/style.hpp"

namespace vsr {

Tensor adain(Tape* tape, const Tensor& x, const AdaInParams& params, double eps) {
    const auto [mu, sigma] = instance_stats(tape, x, eps);
    return normalize_affine(tape, x, mu, sigma, params.y_s, params.y_b);
}

AdaInParams style_params_from_latent(Tape* tape, const Tensor& z, const LinearLayer& head) {
    Tensor raw = head.forward(tape, z);
    const int cols = raw.dim(1);
    if (cols % 2 != 0)
        throw ShapeError("style head must emit 2C columns, got " + std::to_string(cols));
    const int c = cols / 2;
    AdaInParams p;
    p.y_s = add_scalar(tape, slice_cols(tape, raw, 0, c), 1.0);
    p.y_b = slice_cols(tape, raw, c, cols);
    return p;
}

Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& log_var, const Tensor& eps) {
    check_same_shape(mu, log_var, "reparameterize");
    check_same_shape(mu, eps, "reparameterize (eps)");
    Tensor sigma = exp(tape, scale(tape, log_var, 0.5));
    return add(tape, mu, mul(tape, sigma, eps));
}

Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& log_var, RngStream& stream) {
    Tensor eps = Tensor::zeros(mu.shape());
    stream.fill_gaussian(eps);
    return reparameterize(tape, mu, log_var, eps);
}

Tensor kl_divergence(Tape* tape, const Tensor& mu, const Tensor& log_var) {
    check_same_shape(mu, log_var, "kl_divergence");
    const int n = mu.dim(0);
    Tensor inner = sub(tape, add_scalar(tape, log_var, 1.0), mul(tape, mu, mu));
    inner = sub(tape, inner, exp(tape, log_var));
    return scale(tape, sum(tape, inner), -0.5 / static_cast<double>(n));
}

}  // namespace vsr
