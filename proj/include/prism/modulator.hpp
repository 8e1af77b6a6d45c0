#pragma once

#include "prism/rng.hpp"
#include "prism/split_flow.hpp"
#include "prism/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace prism {

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

enum class NoiseMode { Off, Cutoff };

// In cutoff mode each batch item keeps a low-frequency prefix of kappa bands,
// kappa uniform in {1..K}, and the rest become N(0, sigma^2) with one sigma
// per item drawn uniformly from [0, sigma_max). The forced_* hooks pin the draws.
struct NoisePolicy {
    NoiseMode mode = NoiseMode::Off;
    double sigma_max = 1.0;
    std::optional<std::size_t> forced_kappa;
    std::optional<double> forced_sigma;
};

struct NoiseOutcome {
    BandStack stack;
    std::size_t batch = 0;
    std::size_t bands = 0;
    std::vector<std::uint8_t> keep;  // [batch, bands], 1 = kept
    std::vector<double> sigma;       // per batch item

    bool kept(std::size_t item, std::size_t band) const { return keep[item * bands + band] != 0; }
    std::size_t corrupted_count() const;
};

NoiseOutcome inject_noise(const BandStack& stack, const NoisePolicy& policy, SeededRng& rng);

// ---------------------------------------------------------------------------
// Spectral transform
// ---------------------------------------------------------------------------

// Two-layer conv block predicting the residual added to the band sum.
// conv1: K*C -> C, conv2: C -> C, square odd kernels, stride 1, zero "same" padding.
struct ModulatorParams {
    std::size_t bands = 0;
    std::size_t channels = 0;
    std::size_t kernel = 3;
    Tensor conv1_w;  // [C, K*C, k, k]
    Tensor conv1_b;  // [C]
    Tensor conv2_w;  // [C, C, k, k]
    Tensor conv2_b;  // [C]

    // conv1 ~ N(0, 1/fan_in), conv1_b = 0, conv2 = 0 so the block starts as Delta = 0.
    static ModulatorParams init(std::size_t bands, std::size_t channels, SeededRng& rng, std::size_t kernel = 3,
                                DType dtype = DType::F64);

    void validate() const;
};

void save_modulator(const ModulatorParams& params, const std::filesystem::path& dir);
ModulatorParams load_modulator(const std::filesystem::path& dir);

// q = Delta + sum_k bands[k], Delta = conv2(SiLU(conv1(concat_ch(bands)))).
Tensor spectral_transform(const BandStack& stack, const ModulatorParams& params);

double silu(double x);
double silu_grad(double x);

struct ConvDims {
    std::size_t batch = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t kernel = 3;
};

// y[b, o] = bias[o] + sum_i w[o, i] (*) x[b, i], zero padded to keep H x W.
void conv2d_same(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                 std::span<const double> bias, std::span<double> y);

// Accumulates into grad_x, grad_w and grad_b. grad_x may be empty to skip it.
void conv2d_same_backward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                          std::span<const double> grad_y, std::span<double> grad_x, std::span<double> grad_w,
                          std::span<double> grad_b);

// Intermediates of the spectral transform over raw [B, C, H, W] band buffers.
struct ModulatorTrace {
    std::size_t batch = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> concat;          // [B, K*C, H, W]
    std::vector<double> pre_activation;  // conv1 output
    std::vector<double> hidden;          // SiLU(pre_activation)
    std::vector<double> q;               // band sum + Delta
};

ModulatorTrace modulator_forward(const ModulatorParams& params, const std::vector<std::vector<double>>& bands,
                                 std::size_t batch, std::size_t height, std::size_t width);

struct ModulatorGrads {
    std::vector<double> conv1_w, conv1_b, conv2_w, conv2_b;
    std::vector<std::vector<double>> bands;
};

ModulatorGrads modulator_backward(const ModulatorParams& params, const ModulatorTrace& trace,
                                  std::span<const double> grad_q);

}  // namespace prism
