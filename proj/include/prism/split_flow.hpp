#pragma once

#include "prism/band_masks.hpp"
#include "prism/spectral.hpp"
#include "prism/tensor.hpp"

#include <span>
#include <vector>

namespace prism {

// K band tensors plus the leftover residual, each shaped like the split input.
struct BandStack {
    std::vector<Tensor> bands;
    Tensor final_residual;
    BandMaskSet mask_set;

    std::size_t band_count() const noexcept { return bands.size(); }
};

// Band projection and residual split over raw [slices, H, W] buffers. The
// tensor-level functions below and the toy trainer's backward pass share it.
class SplitOperator {
public:
    explicit SplitOperator(BandMaskSet set);

    const BandMaskSet& mask_set() const noexcept { return set_; }
    std::size_t slice_size() const noexcept { return set_.height * set_.width; }

    // out = F^-1(mask * F(in)) per slice. Returns the largest discarded imaginary part.
    double project(std::span<const double> in, std::span<double> out, const Tensor& mask) const;

    // r0 = z; band_k = P_k(r_k); r_{k+1} = r_k - band_k. Bands are rounded to
    // `dtype` before the subtraction so the telescoping sum stays exact.
    void split(std::span<const double> z, std::vector<std::vector<double>>& bands, std::vector<double>& residual,
               DType dtype = DType::F64) const;

    // Adjoint of `split`: maps gradients w.r.t. (bands, residual) to a gradient
    // w.r.t. z. Projectors are real and symmetric, so each P_k is self-adjoint.
    void split_adjoint(const std::vector<std::vector<double>>& band_grads, std::span<const double> residual_grad,
                       std::span<double> z_grad) const;

private:
    void check_buffer(std::size_t n) const;

    BandMaskSet set_;
    Fft2d fft_;
};

// P(x) for a real symmetric [H, W] mask applied per (b, c) slice.
// Throws SymmetryError when the mask is not Hermitian-compatible.
Tensor project_band(const Tensor& x, const Tensor& mask);

// Residual split flow over a [B, C, H, W] grid.
BandStack iterative_split(const Tensor& z, const BandMaskSet& mask_set);

// Sum of all bands plus the final residual (optionally omitted).
Tensor recompose(const BandStack& stack, bool include_residual = true);

}  // namespace prism
