#pragma once

#include "prism/rng.hpp"
#include "prism/tensor.hpp"

namespace prism {

struct SinusoidMixture {
    std::size_t count = 64;
    std::size_t channels = 3;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t components = 3;     // sinusoids per channel
    std::size_t max_frequency = 2;  // integer cycles per image side
    double texture_sigma = 0.0;     // i.i.d. pixel noise added before clamping
};

// [count, channels, H, W] images in [0, 1]: 0.5 plus periodic sinusoids with
// integer frequencies, random amplitudes and phases, optional white texture.
Tensor sinusoid_mixture_images(const SinusoidMixture& spec, SeededRng& rng, DType dtype = DType::F64);

}  // namespace prism
