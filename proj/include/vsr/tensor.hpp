#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "vsr/error.hpp"

namespace vsr {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Backing storage of a tensor: row-major f64 values plus an optional
// same-sized gradient buffer. Referenced through shared_ptr so autodiff nodes
// can keep saved inputs alive; values are treated as immutable once an op has
// produced them (parameters are only mutated between training steps).
struct TensorData {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
};

// Value-semantic handle. Copying a Tensor aliases the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorData> p) : p_(std::move(p)) {}

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);
    static Tensor from_data(const Shape& shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return p_ != nullptr; }
    const Shape& shape() const { return p_->shape; }
    int dim(int i) const;
    int rank() const { return static_cast<int>(p_->shape.size()); }
    std::size_t numel() const { return p_->data.size(); }

    double* data() { return p_->data.data(); }
    const double* data() const { return p_->data.data(); }
    std::vector<double>& values() { return p_->data; }
    const std::vector<double>& values() const { return p_->data; }

    // Scalar extraction; throws ShapeError when numel != 1.
    double item() const;

    bool requires_grad() const { return p_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        p_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !p_->grad.empty(); }
    // Allocates (zero-filled) on first use.
    std::vector<double>& grad();
    const std::vector<double>& grad() const { return p_->grad; }
    void zero_grad();

    // Deep copy of values; grad not copied.
    Tensor clone() const;
    // Same values, detached from any grad bookkeeping.
    Tensor detached() const;

    bool all_finite() const;

    std::shared_ptr<TensorData> ptr() const { return p_; }
    TensorData* raw() const { return p_.get(); }

private:
    std::shared_ptr<TensorData> p_;
};

// Throwing accessors used across ops.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace vsr
