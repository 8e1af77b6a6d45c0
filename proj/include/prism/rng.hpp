#pragma once

#include "prism/tensor.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace prism {

// xoshiro256** seeded through splitmix64. The stream depends only on the seed,
// never on the platform or standard library.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n); n must be positive. Unbiased (rejection sampling).
    std::uint64_t uniform_int(std::uint64_t n);
    // Box-Muller; each transform yields two variates, consumed in order.
    double gaussian(double mu = 0.0, double sigma = 1.0);

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    std::optional<double> spare_;
};

// Independent seed for a named substream of `seed` (splitmix64 of both words).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// I.i.d. N(mu, sigma^2) tensor. Throws ArgumentError for sigma < 0.
Tensor gaussian_tensor(SeededRng& rng, Shape shape, double mu, double sigma, DType dtype = DType::F32);

}  // namespace prism
