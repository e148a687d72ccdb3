#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "vsr/tensor.hpp"

namespace vsr {

// Recorded computation graph. Ops execute eagerly and, when a tape is given
// and some input requires grad, append one node holding the backward closure.
// Recording order is the topological order, so backward() is a single reverse
// sweep; gradients accumulate in that fixed order, which makes backward runs
// deterministic. A tape can be replayed exactly once (a second backward on
// the same tape throws, by design).
class Tape {
public:
    struct Node {
        std::vector<std::shared_ptr<TensorData>> outputs;
        std::function<void()> backward;
    };

    void record(std::vector<std::shared_ptr<TensorData>> outputs, std::function<void()> backward);

    bool contains(const Tensor& t) const { return produced_.count(t.raw()) != 0; }
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Reverse sweep from `loss` (a scalar produced on this tape).
    void run_backward(const Tensor& loss);

private:
    std::vector<Node> nodes_;
    std::unordered_set<const TensorData*> produced_;
    bool consumed_ = false;
};

// Free-function form; seeds d(loss)/d(loss) = 1 and accumulates into the
// grad buffers of every requires_grad tensor reachable from the loss.
void backward(const Tensor& loss, Tape& tape);

// True when any input wants gradients and recording is on.
inline bool grad_needed(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

// Gradient buffer of `t` if one was written during this backward, else null.
inline const double* grad_or_null(const std::shared_ptr<TensorData>& t) {
    return t->grad.empty() ? nullptr : t->grad.data();
}

// Accumulation target, allocated on first touch.
double* grad_accum(const std::shared_ptr<TensorData>& t);

}  // namespace vsr
