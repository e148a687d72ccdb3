#include "vsr/optim.hpp"

#include <cmath>

namespace vsr {

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].tensor.numel(), 0.0);
        v_[i].assign(params_[i].tensor.numel(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        const std::size_t n = p.numel();
        const double* g = p.has_grad() ? p.grad().data() : nullptr;
        double* m = m_[i].data();
        double* v = v_[i].data();
        double* w = p.data();
        for (std::size_t j = 0; j < n; ++j) {
            const double gj = g ? g[j] : 0.0;
            m[j] = b1_ * m[j] + (1.0 - b1_) * gj;
            v[j] = b2_ * v[j] + (1.0 - b2_) * gj * gj;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace vsr
