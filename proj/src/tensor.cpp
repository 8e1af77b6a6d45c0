#include "prism/tensor.hpp"

#include "prism/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prism {

namespace {

void round_to(DType dtype, std::vector<double>& values) {
    if (dtype == DType::F32) {
        for (double& v : values) v = static_cast<double>(static_cast<float>(v));
    }
}

void validate(const Shape& shape) {
    if (shape.empty()) throw ArgumentError("tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
        if (d == 0) throw ArgumentError("tensor dimension sizes must be >= 1, got " + shape_string(shape));
    }
}

}  // namespace

const char* dtype_name(DType dtype) noexcept {
    return dtype == DType::F32 ? "f32" : "f64";
}

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor() : shape_{1}, values_(1, 0.0) {}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    validate(shape_);
    values_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), values_(std::move(values)) {
    validate(shape_);
    if (values_.size() != element_count(shape_)) {
        throw ArgumentError("tensor of shape " + shape_string(shape_) + " needs " +
                            std::to_string(element_count(shape_)) + " values, got " +
                            std::to_string(values_.size()));
    }
    round_to(dtype_, values_);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    const std::size_t n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), dtype);
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw ArgumentError("axis out of range");
    return shape_[axis];
}

Tensor Tensor::with_values(std::vector<double> values) const {
    return Tensor(shape_, std::move(values), dtype_);
}

Tensor Tensor::as(DType dtype) const {
    return Tensor(shape_, values_, dtype);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (element_count(shape) != values_.size()) {
        throw ArgumentError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), values_, dtype_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ArgumentError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

void require_grid(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw ArgumentError(std::string(what) + " must be a [B,C,H,W] grid, got shape " + shape_string(t.shape()));
    }
}

}  // namespace prism
