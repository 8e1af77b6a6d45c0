#pragma once

#include "prism/tensor.hpp"

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace prism {

using Complex = std::complex<double>;

// Orthonormal 1D DFT of a fixed length: both directions scale by 1/sqrt(n).
// Power-of-two lengths use iterative radix-2; other lengths go through
// Bluestein's chirp-z on a padded radix-2 transform.
class Fft1d {
public:
    explicit Fft1d(std::size_t n);
    ~Fft1d();
    Fft1d(Fft1d&&) noexcept;
    Fft1d& operator=(Fft1d&&) noexcept;

    std::size_t size() const noexcept { return n_; }
    void forward(std::span<Complex> data) const;
    void inverse(std::span<Complex> data) const;

private:
    struct Impl;
    std::size_t n_;
    std::unique_ptr<Impl> impl_;
};

// Orthonormal 2D transform over an H x W slice (row-major, DC at index 0).
class Fft2d {
public:
    Fft2d(std::size_t height, std::size_t width);

    std::size_t height() const noexcept { return rows_.size(); }
    std::size_t width() const noexcept { return cols_.size(); }

    void forward(std::span<const double> real, std::span<Complex> out) const;
    void forward(std::span<Complex> data) const;
    void inverse(std::span<Complex> data) const;

private:
    void transform(std::span<Complex> data, bool inverse) const;

    Fft1d rows_;  // length H, applied down columns
    Fft1d cols_;  // length W, applied along rows
};

// Complex spectrum over the last two axes of a real tensor, stored unshifted
// with orthonormal scaling.
struct Spectrum {
    Shape shape;  // [..., H, W]
    std::vector<double> re;
    std::vector<double> im;
    DType source_dtype = DType::F64;

    std::size_t height() const { return shape[shape.size() - 2]; }
    std::size_t width() const { return shape.back(); }
    std::size_t slice_count() const { return re.size() / (height() * width()); }
};

Spectrum dft2(const Tensor& x);

struct RealInverse {
    Tensor real;
    double max_imag = 0.0;  // largest |imaginary part| discarded
};

// Inverse transform keeping the real part; reports the discarded imaginary residue.
RealInverse idft2_checked(const Spectrum& s);
// As idft2_checked, but throws SymmetryError when the residue exceeds `imag_tolerance`.
Tensor idft2(const Spectrum& s, double imag_tolerance = 1e-6);

double total_energy(const Tensor& x);
double spectral_energy(const Spectrum& s);

}  // namespace prism
