#include "vsr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace vsr {

std::string shape_str(const Shape& s) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out << ',';
        out << s[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(const Shape& shape) {
    auto p = std::make_shared<TensorData>();
    p->shape = shape;
    p->data.assign(shape_numel(shape), 0.0);
    return Tensor(std::move(p));
}

Tensor Tensor::full(const Shape& shape, double value) {
    Tensor t = zeros(shape);
    for (double& v : t.p_->data) v = value;
    return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> values) {
    if (values.size() != shape_numel(shape))
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    auto p = std::make_shared<TensorData>();
    p->shape = shape;
    p->data = std::move(values);
    return Tensor(std::move(p));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

int Tensor::dim(int i) const {
    if (i < 0 || i >= rank()) throw ShapeError("dim index out of range");
    return p_->shape[static_cast<std::size_t>(i)];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, got shape " + shape_str(shape()));
    return p_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0);
    return p_->grad;
}

void Tensor::zero_grad() {
    if (!p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0);
}

Tensor Tensor::clone() const {
    auto p = std::make_shared<TensorData>();
    p->shape = p_->shape;
    p->data = p_->data;
    p->requires_grad = p_->requires_grad;
    return Tensor(std::move(p));
}

Tensor Tensor::detached() const {
    auto p = std::make_shared<TensorData>();
    p->shape = p_->shape;
    p->data = p_->data;
    p->requires_grad = false;
    return Tensor(std::move(p));
}

bool Tensor::all_finite() const {
    for (double v : p_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace vsr
