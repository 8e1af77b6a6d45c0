#include "prism/split_flow.hpp"

#include "prism/errors.hpp"

#include <algorithm>
#include <cmath>

namespace prism {

namespace {

// Relative imaginary-residue limit for projections with symmetric masks.
constexpr double kProjectionImagTolerance = 1e-5;

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

void round_values(std::vector<double>& v, DType dtype) {
    if (dtype == DType::F32) {
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    }
}

void check_symmetry(double residue, std::span<const double> in) {
    const double tolerance = kProjectionImagTolerance * std::max(1.0, max_abs(in));
    if (residue > tolerance) throw SymmetryError(residue, tolerance);
}

// Masked round trip of every HxW slice; returns the largest discarded imaginary part.
double project_slices(const Fft2d& fft, std::span<const double> in, std::span<double> out, const Tensor& mask) {
    const std::size_t hw = fft.height() * fft.width();
    std::vector<Complex> slice(hw);
    double residue = 0.0;
    for (std::size_t base = 0; base < in.size(); base += hw) {
        fft.forward(in.subspan(base, hw), slice);
        for (std::size_t i = 0; i < hw; ++i) slice[i] *= mask[i];
        fft.inverse(slice);
        for (std::size_t i = 0; i < hw; ++i) {
            out[base + i] = slice[i].real();
            residue = std::max(residue, std::abs(slice[i].imag()));
        }
    }
    return residue;
}

}  // namespace

SplitOperator::SplitOperator(BandMaskSet set) : set_(std::move(set)), fft_(set_.height, set_.width) {}

void SplitOperator::check_buffer(std::size_t n) const {
    if (n % slice_size() != 0) throw ArgumentError("buffer is not a whole number of HxW slices");
}

double SplitOperator::project(std::span<const double> in, std::span<double> out, const Tensor& mask) const {
    const std::size_t hw = slice_size();
    check_buffer(in.size());
    if (mask.size() != hw) throw ArgumentError("mask shape does not match the slice grid");
    return project_slices(fft_, in, out, mask);
}

void SplitOperator::split(std::span<const double> z, std::vector<std::vector<double>>& bands,
                          std::vector<double>& residual, DType dtype) const {
    check_buffer(z.size());
    residual.assign(z.begin(), z.end());
    bands.assign(set_.bands, std::vector<double>(z.size()));
    for (std::size_t k = 0; k < set_.bands; ++k) {
        check_symmetry(project(residual, bands[k], set_.projectors[k]), residual);
        round_values(bands[k], dtype);
        for (std::size_t i = 0; i < z.size(); ++i) residual[i] -= bands[k][i];
    }
}

void SplitOperator::split_adjoint(const std::vector<std::vector<double>>& band_grads,
                                  std::span<const double> residual_grad, std::span<double> z_grad) const {
    if (band_grads.size() != set_.bands) throw ArgumentError("split_adjoint: band gradient count mismatch");
    const std::size_t n = residual_grad.size();
    check_buffer(n);
    // g_{r_k} = g_{r_{k+1}} + P_k(g_{band_k} - g_{r_{k+1}})
    std::vector<double> carry(residual_grad.begin(), residual_grad.end());
    std::vector<double> diff(n);
    std::vector<double> projected(n);
    for (std::size_t k = set_.bands; k-- > 0;) {
        if (band_grads[k].size() != n) throw ArgumentError("split_adjoint: band gradient size mismatch");
        for (std::size_t i = 0; i < n; ++i) diff[i] = band_grads[k][i] - carry[i];
        project(diff, projected, set_.projectors[k]);
        for (std::size_t i = 0; i < n; ++i) carry[i] += projected[i];
    }
    std::copy(carry.begin(), carry.end(), z_grad.begin());
}

Tensor project_band(const Tensor& x, const Tensor& mask) {
    if (x.rank() < 2) throw ArgumentError("project_band: input needs at least two axes");
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    if (mask.shape() != Shape{h, w}) {
        throw ArgumentError("project_band: mask shape " + shape_string(mask.shape()) + " does not match grid [" +
                            std::to_string(h) + "," + std::to_string(w) + "]");
    }
    std::vector<double> out(x.size());
    check_symmetry(project_slices(Fft2d(h, w), x.values(), out, mask), x.values());
    return x.with_values(std::move(out));
}

BandStack iterative_split(const Tensor& z, const BandMaskSet& mask_set) {
    require_grid(z, "iterative_split input");
    if (z.dim(2) != mask_set.height || z.dim(3) != mask_set.width) {
        throw ArgumentError("iterative_split: mask grid " + std::to_string(mask_set.height) + "x" +
                            std::to_string(mask_set.width) + " does not match input " + shape_string(z.shape()));
    }
    const SplitOperator op(mask_set);
    std::vector<std::vector<double>> bands;
    std::vector<double> residual;
    op.split(z.values(), bands, residual, z.dtype());

    BandStack stack;
    stack.mask_set = mask_set;
    for (auto& b : bands) stack.bands.push_back(z.with_values(std::move(b)));
    stack.final_residual = z.with_values(std::move(residual));
    return stack;
}

Tensor recompose(const BandStack& stack, bool include_residual) {
    if (stack.bands.empty()) throw ArgumentError("recompose: empty band stack");
    const Tensor& first = stack.bands.front();
    std::vector<double> sum(first.size(), 0.0);
    for (const auto& band : stack.bands) {
        if (band.shape() != first.shape()) throw ArgumentError("recompose: bands differ in shape");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += band[i];
    }
    if (include_residual) {
        if (stack.final_residual.shape() != first.shape()) throw ArgumentError("recompose: residual shape mismatch");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += stack.final_residual[i];
    }
    return first.with_values(std::move(sum));
}

}  // namespace prism
