#include "vsr/tape.hpp"

namespace vsr {

void Tape::record(std::vector<std::shared_ptr<TensorData>> outputs,
                  std::function<void()> backward_fn) {
    for (const auto& out : outputs) produced_.insert(out.get());
    nodes_.push_back(Node{std::move(outputs), std::move(backward_fn)});
}

void Tape::run_backward(const Tensor& loss) {
    if (consumed_)
        throw TapeError("backward already ran on this tape; record a fresh tape instead");
    if (loss.numel() != 1)
        throw TapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!contains(loss)) throw TapeError("loss tensor was not produced on this tape");
    consumed_ = true;

    loss.ptr()->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        bool any = false;
        for (const auto& out : it->outputs)
            if (!out->grad.empty()) {
                any = true;
                break;
            }
        if (any) it->backward();
    }
}

void backward(const Tensor& loss, Tape& tape) { tape.run_backward(loss); }

double* grad_accum(const std::shared_ptr<TensorData>& t) {
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
    return t->grad.data();
}

}  // namespace vsr
