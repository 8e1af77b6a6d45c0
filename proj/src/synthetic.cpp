#include "prism/synthetic.hpp"

#include "prism/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prism {

Tensor sinusoid_mixture_images(const SinusoidMixture& spec, SeededRng& rng, DType dtype) {
    if (spec.count == 0 || spec.channels == 0 || spec.height == 0 || spec.width == 0) {
        throw ArgumentError("sinusoid_mixture_images: empty image spec");
    }
    const std::size_t hw = spec.height * spec.width;
    std::vector<double> values(spec.count * spec.channels * hw);
    const auto span = static_cast<std::uint64_t>(2 * spec.max_frequency + 1);
    // Peak amplitudes sum to at most 0.45, so the clean mixture stays inside [0.05, 0.95].
    const double amp_max = spec.components ? 0.45 / static_cast<double>(spec.components) : 0.0;
    for (std::size_t img = 0; img < spec.count; ++img) {
        for (std::size_t c = 0; c < spec.channels; ++c) {
            double* out = values.data() + (img * spec.channels + c) * hw;
            std::fill(out, out + hw, 0.5);
            for (std::size_t j = 0; j < spec.components; ++j) {
                const double fy = static_cast<double>(rng.uniform_int(span)) - static_cast<double>(spec.max_frequency);
                const double fx = static_cast<double>(rng.uniform_int(span)) - static_cast<double>(spec.max_frequency);
                const double amp = amp_max * rng.uniform();
                const double phase = 2.0 * std::numbers::pi * rng.uniform();
                for (std::size_t y = 0; y < spec.height; ++y) {
                    for (std::size_t x = 0; x < spec.width; ++x) {
                        const double t = fy * static_cast<double>(y) / static_cast<double>(spec.height) +
                                         fx * static_cast<double>(x) / static_cast<double>(spec.width);
                        out[y * spec.width + x] += amp * std::sin(2.0 * std::numbers::pi * t + phase);
                    }
                }
            }
            if (spec.texture_sigma > 0.0) {
                for (std::size_t i = 0; i < hw; ++i) out[i] += rng.gaussian(0.0, spec.texture_sigma);
            }
            for (std::size_t i = 0; i < hw; ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
        }
    }
    return Tensor({spec.count, spec.channels, spec.height, spec.width}, std::move(values), dtype);
}

}  // namespace prism
