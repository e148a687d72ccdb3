#include "vsr/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace vsr {

GradCheckReport grad_check(const GradFn& f, std::vector<Tensor> inputs, double eps, double tol) {
    GradCheckReport report;

    // Work on private copies: perturbations and accumulated grads must not
    // leak into (or from) the caller's tensors.
    for (auto& t : inputs) {
        t = t.clone();
        t.set_requires_grad(true);
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = f(&tape, inputs);
        if (loss.numel() != 1) {
            report.finite = false;
            report.detail = "function is not scalar-valued";
            return report;
        }
        if (!std::isfinite(loss.item())) {
            report.finite = false;
            report.detail = "non-finite loss value";
            return report;
        }
        backward(loss, tape);
        for (const auto& t : inputs) {
            if (t.has_grad())
                analytic.push_back(t.grad());
            else
                analytic.emplace_back(t.numel(), 0.0);
        }
    }

    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor& t = inputs[ti];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + eps;
            const double plus = f(nullptr, inputs).item();
            t.data()[i] = saved - eps;
            const double minus = f(nullptr, inputs).item();
            t.data()[i] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                report.finite = false;
                std::ostringstream os;
                os << "non-finite perturbation value at input " << ti << " element " << i;
                report.detail = os.str();
                return report;
            }
            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = analytic[ti][i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                std::ostringstream os;
                os << "input " << ti << " element " << i << ": analytic " << a << " numeric "
                   << numeric;
                report.detail = os.str();
            }
        }
    }
    report.pass = report.finite && report.max_rel_error < tol;
    return report;
}

}  // namespace vsr
