#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vsr/tape.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Scalar-valued function under test. Called with a recording tape for the
// analytic pass and with nullptr for the finite-difference evaluations, so it
// must be deterministic (freeze any sampled noise outside).
using GradFn = std::function<Tensor(Tape*, const std::vector<Tensor>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool finite = true;  // false if any evaluation produced NaN/Inf
    bool pass = false;
    std::string detail;  // location of the worst component, or the failure reason
};

// Compares analytic gradients against central differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every input.
// Relative error per component is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const GradFn& f, std::vector<Tensor> inputs, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace vsr
