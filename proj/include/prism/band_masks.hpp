#pragma once

#include "prism/tensor.hpp"

#include <vector>

namespace prism {

inline constexpr double kDefaultTaper = 0.04;

// Per-bin radial frequency, normalized so the spectral corner (0.5, 0.5)
// cycles/sample is 1.0. Axis Nyquist sits at 1/sqrt(2). Shape [H, W], DC at (0, 0).
Tensor normalized_radius(std::size_t height, std::size_t width);

// Raised-cosine low-pass step: 1 below edge - taper, 0 above edge + taper,
// 0.5 at the edge. taper == 0 gives a hard step with r == edge passing.
double raised_cosine_step(double r, double edge, double taper);

// K concentric radial rings with raised-cosine crossfades at the interior edges.
//
// `masks` are the ring weights (each in [0, 1], symmetric, summing to 1).
// `projectors` are the per-step masks the residual split applies. For a
// normalized set each projector is the ring weight divided by the weight still
// unclaimed by earlier rings, so band k of the split carries exactly ring k's
// weighted share and the final residual vanishes. For a non-normalized set the
// ring weights act as projectors directly and the overlap zones leave a residual.
struct BandMaskSet {
    std::size_t bands = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> edges;  // bands + 1 radii, 0 = edges[0] < ... < edges[K] = 1
    double taper = 0.0;
    bool normalized = false;
    std::vector<Tensor> masks;
    std::vector<Tensor> projectors;

    // Masks stacked as [K, H, W].
    Tensor stacked() const;
};

// Throws ArgumentError for K == 0 or taper outside [0, ring width / 2).
BandMaskSet ring_masks(std::size_t height, std::size_t width, std::size_t bands, double taper, bool normalized);

struct CutoffMaskPair {
    Tensor lp;
    Tensor hp;
    double rho = 1.0;
    double taper = 0.0;
};

// Complementary low/high-pass pair with a raised-cosine step at `rho`. Near the
// corner the transition half-width shrinks to 1 - rho so rho == 1 passes every bin.
CutoffMaskPair cutoff_masks(std::size_t height, std::size_t width, double rho, double taper);

}  // namespace prism
