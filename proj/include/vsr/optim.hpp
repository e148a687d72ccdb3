#pragma once

#include <cstdint>
#include <vector>

#include "vsr/layers.hpp"

namespace vsr {

// Adam with bias correction (eps inside the square-root denominator's sum,
// added after the root). Parameters without a grad buffer are treated as
// having zero gradient. Update order follows the registration order.
class Adam {
public:
    Adam() = default;
    Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void zero_grad();
    void step();

    const ParamList& params() const { return params_; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }

    // Moment buffers exposed for checkpointing, index-aligned with params().
    std::vector<double>& moment_m(std::size_t i) { return m_[i]; }
    std::vector<double>& moment_v(std::size_t i) { return v_[i]; }

private:
    ParamList params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_ = 1e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    std::int64_t t_ = 0;
};

}  // namespace vsr
