#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace prism {

// Element precision. The numeric codes are the on-disk dtype codes of the PZT format.
enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

const char* dtype_name(DType dtype) noexcept;

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major real tensor.
//
// Values are immutable once constructed. Storage is always double; an F32 tensor
// holds only values exactly representable as float (every constructor rounds), so
// numerics can run in double while the stored precision stays that of the dtype.
class Tensor {
public:
    // Scalar-shaped zero, so containers of tensors are default-constructible.
    Tensor();
    explicit Tensor(Shape shape, DType dtype = DType::F64);
    Tensor(Shape shape, std::vector<double> values, DType dtype = DType::F64);

    static Tensor full(Shape shape, double value, DType dtype = DType::F64);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return values_.size(); }
    DType dtype() const noexcept { return dtype_; }

    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    // Same shape and dtype, new values (rounded to dtype).
    Tensor with_values(std::vector<double> values) const;
    Tensor as(DType dtype) const;
    Tensor reshaped(Shape shape) const;

    // Exact equality of shape, dtype and every value.
    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    DType dtype_ = DType::F64;
    std::vector<double> values_;
};

// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
// Euclidean norm of all values.
double l2_norm(const Tensor& t);

// Throws ArgumentError unless `t` is rank 4 ([B, C, H, W]).
void require_grid(const Tensor& t, const char* what);

}  // namespace prism
