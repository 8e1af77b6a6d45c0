#include "prism/modulator.hpp"

#include "prism/errors.hpp"
#include "prism/key_value.hpp"
#include "prism/pzt.hpp"

#include <cmath>

namespace prism {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_shape(const Tensor& t, const Shape& expected, const char* name) {
    if (t.shape() != expected) {
        throw ArgumentError(std::string("modulator ") + name + " has shape " + shape_string(t.shape()) +
                            ", expected " + shape_string(expected));
    }
}

}  // namespace

std::size_t NoiseOutcome::corrupted_count() const {
    std::size_t n = 0;
    for (auto k : keep) n += k == 0 ? 1 : 0;
    return n;
}

NoiseOutcome inject_noise(const BandStack& stack, const NoisePolicy& policy, SeededRng& rng) {
    if (stack.bands.empty()) throw ArgumentError("inject_noise: empty band stack");
    require_grid(stack.bands.front(), "inject_noise band");
    const std::size_t bands = stack.bands.size();
    const std::size_t batch = stack.bands.front().dim(0);
    const std::size_t item_size = stack.bands.front().size() / batch;

    NoiseOutcome out;
    out.stack = stack;
    out.batch = batch;
    out.bands = bands;
    out.keep.assign(batch * bands, 1);
    out.sigma.assign(batch, 0.0);
    if (policy.mode == NoiseMode::Off) return out;

    if (policy.forced_kappa && (*policy.forced_kappa < 1 || *policy.forced_kappa > bands)) {
        throw ArgumentError("inject_noise: forced kappa must lie in [1, K]");
    }
    if (policy.forced_sigma && !(*policy.forced_sigma >= 0.0)) {
        throw ArgumentError("inject_noise: forced sigma must be >= 0");
    }

    std::vector<std::vector<double>> values(bands);
    for (std::size_t k = 0; k < bands; ++k) {
        values[k].assign(stack.bands[k].values().begin(), stack.bands[k].values().end());
    }
    for (std::size_t b = 0; b < batch; ++b) {
        // Draw order per item: kappa, sigma, then noise for bands kappa..K-1.
        const std::size_t kappa = policy.forced_kappa ? *policy.forced_kappa : 1 + rng.uniform_int(bands);
        const double sigma = policy.forced_sigma ? *policy.forced_sigma : rng.uniform() * policy.sigma_max;
        out.sigma[b] = sigma;
        for (std::size_t k = kappa; k < bands; ++k) {
            out.keep[b * bands + k] = 0;
            for (std::size_t i = 0; i < item_size; ++i) values[k][b * item_size + i] = rng.gaussian(0.0, sigma);
        }
    }
    for (std::size_t k = 0; k < bands; ++k) out.stack.bands[k] = stack.bands[k].with_values(std::move(values[k]));
    return out;
}

ModulatorParams ModulatorParams::init(std::size_t bands, std::size_t channels, SeededRng& rng, std::size_t kernel,
                                      DType dtype) {
    if (bands == 0 || channels == 0) throw ArgumentError("modulator needs K >= 1 and C >= 1");
    if (kernel % 2 == 0) throw ArgumentError("modulator kernel size must be odd");
    ModulatorParams p;
    p.bands = bands;
    p.channels = channels;
    p.kernel = kernel;
    const std::size_t fan_in = bands * channels * kernel * kernel;
    p.conv1_w = gaussian_tensor(rng, {channels, bands * channels, kernel, kernel}, 0.0,
                                1.0 / std::sqrt(static_cast<double>(fan_in)), dtype);
    p.conv1_b = Tensor({channels}, dtype);
    p.conv2_w = Tensor({channels, channels, kernel, kernel}, dtype);
    p.conv2_b = Tensor({channels}, dtype);
    return p;
}

void ModulatorParams::validate() const {
    if (bands == 0 || channels == 0 || kernel % 2 == 0) throw ArgumentError("modulator: invalid K, C or kernel");
    check_shape(conv1_w, {channels, bands * channels, kernel, kernel}, "conv1_w");
    check_shape(conv1_b, {channels}, "conv1_b");
    check_shape(conv2_w, {channels, channels, kernel, kernel}, "conv2_w");
    check_shape(conv2_b, {channels}, "conv2_b");
}

void save_modulator(const ModulatorParams& params, const std::filesystem::path& dir) {
    params.validate();
    std::filesystem::create_directories(dir);
    save_tensor(params.conv1_w, dir / "conv1_w.pzt");
    save_tensor(params.conv1_b, dir / "conv1_b.pzt");
    save_tensor(params.conv2_w, dir / "conv2_w.pzt");
    save_tensor(params.conv2_b, dir / "conv2_b.pzt");
    KeyValues manifest;
    manifest.set("bands", std::to_string(params.bands));
    manifest.set("channels", std::to_string(params.channels));
    manifest.set("kernel", std::to_string(params.kernel));
    manifest.write(dir / "modulator.txt");
}

ModulatorParams load_modulator(const std::filesystem::path& dir) {
    const auto manifest = KeyValues::read(dir / "modulator.txt");
    ModulatorParams p;
    p.bands = static_cast<std::size_t>(manifest.get_int("bands"));
    p.channels = static_cast<std::size_t>(manifest.get_int("channels"));
    p.kernel = static_cast<std::size_t>(manifest.get_int("kernel"));
    p.conv1_w = load_tensor(dir / "conv1_w.pzt");
    p.conv1_b = load_tensor(dir / "conv1_b.pzt");
    p.conv2_w = load_tensor(dir / "conv2_w.pzt");
    p.conv2_b = load_tensor(dir / "conv2_b.pzt");
    p.validate();
    return p;
}

double silu(double x) {
    return x * sigmoid(x);
}

double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

void conv2d_same(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                 std::span<const double> bias, std::span<double> y) {
    const std::size_t hw = d.height * d.width;
    const auto k = static_cast<std::ptrdiff_t>(d.kernel);
    const auto half = k / 2;
    const auto height = static_cast<std::ptrdiff_t>(d.height);
    const auto width = static_cast<std::ptrdiff_t>(d.width);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out_channels; ++o) {
            double* out = y.data() + (b * d.out_channels + o) * hw;
            for (std::size_t i = 0; i < hw; ++i) out[i] = bias[o];
            for (std::size_t c = 0; c < d.in_channels; ++c) {
                const double* in = x.data() + (b * d.in_channels + c) * hw;
                const double* kern = w.data() + (o * d.in_channels + c) * d.kernel * d.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = ky - half;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min(height, height - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = kx - half;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min(width, width - dx);
                        const double wv = kern[ky * k + kx];
                        if (wv == 0.0) continue;
                        for (std::ptrdiff_t yy = y0; yy < y1; ++yy) {
                            double* row = out + yy * width;
                            const double* src = in + (yy + dy) * width + dx;
                            for (std::ptrdiff_t xx = x0; xx < x1; ++xx) row[xx] += wv * src[xx];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_same_backward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                          std::span<const double> grad_y, std::span<double> grad_x, std::span<double> grad_w,
                          std::span<double> grad_b) {
    const std::size_t hw = d.height * d.width;
    const auto k = static_cast<std::ptrdiff_t>(d.kernel);
    const auto half = k / 2;
    const auto height = static_cast<std::ptrdiff_t>(d.height);
    const auto width = static_cast<std::ptrdiff_t>(d.width);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out_channels; ++o) {
            const double* gy = grad_y.data() + (b * d.out_channels + o) * hw;
            for (std::size_t i = 0; i < hw; ++i) grad_b[o] += gy[i];
            for (std::size_t c = 0; c < d.in_channels; ++c) {
                const double* in = x.data() + (b * d.in_channels + c) * hw;
                double* gin = grad_x.empty() ? nullptr : grad_x.data() + (b * d.in_channels + c) * hw;
                const std::size_t kbase = (o * d.in_channels + c) * d.kernel * d.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = ky - half;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min(height, height - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = kx - half;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min(width, width - dx);
                        const double wv = w[kbase + static_cast<std::size_t>(ky * k + kx)];
                        double acc = 0.0;
                        for (std::ptrdiff_t yy = y0; yy < y1; ++yy) {
                            const double* grow = gy + yy * width;
                            const double* src = in + (yy + dy) * width + dx;
                            double* dst = gin ? gin + (yy + dy) * width + dx : nullptr;
                            for (std::ptrdiff_t xx = x0; xx < x1; ++xx) {
                                acc += grow[xx] * src[xx];
                                if (dst) dst[xx] += wv * grow[xx];
                            }
                        }
                        grad_w[kbase + static_cast<std::size_t>(ky * k + kx)] += acc;
                    }
                }
            }
        }
    }
}

ModulatorTrace modulator_forward(const ModulatorParams& params, const std::vector<std::vector<double>>& bands,
                                 std::size_t batch, std::size_t height, std::size_t width) {
    params.validate();
    const std::size_t K = params.bands;
    const std::size_t C = params.channels;
    const std::size_t hw = height * width;
    const std::size_t band_size = batch * C * hw;
    if (bands.size() != K) {
        throw ArgumentError("spectral transform expects " + std::to_string(K) + " bands, got " +
                            std::to_string(bands.size()));
    }
    for (const auto& b : bands) {
        if (b.size() != band_size) throw ArgumentError("spectral transform: band size does not match [B,C,H,W]");
    }

    ModulatorTrace t;
    t.batch = batch;
    t.height = height;
    t.width = width;
    t.concat.resize(batch * K * C * hw);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < K; ++k) {
            const double* src = bands[k].data() + b * C * hw;
            std::copy(src, src + C * hw, t.concat.begin() + static_cast<std::ptrdiff_t>((b * K + k) * C * hw));
        }
    }
    const ConvDims d1{batch, K * C, C, height, width, params.kernel};
    const ConvDims d2{batch, C, C, height, width, params.kernel};
    t.pre_activation.resize(band_size);
    conv2d_same(d1, t.concat, params.conv1_w.values(), params.conv1_b.values(), t.pre_activation);
    t.hidden.resize(band_size);
    for (std::size_t i = 0; i < band_size; ++i) t.hidden[i] = silu(t.pre_activation[i]);
    std::vector<double> delta(band_size);
    conv2d_same(d2, t.hidden, params.conv2_w.values(), params.conv2_b.values(), delta);

    // Band sum first, in band order, then the residual branch.
    t.q.assign(band_size, 0.0);
    for (const auto& b : bands) {
        for (std::size_t i = 0; i < band_size; ++i) t.q[i] += b[i];
    }
    for (std::size_t i = 0; i < band_size; ++i) t.q[i] += delta[i];
    return t;
}

ModulatorGrads modulator_backward(const ModulatorParams& params, const ModulatorTrace& trace,
                                  std::span<const double> grad_q) {
    const std::size_t K = params.bands;
    const std::size_t C = params.channels;
    const std::size_t hw = trace.height * trace.width;
    const std::size_t band_size = trace.batch * C * hw;
    if (grad_q.size() != band_size) throw ArgumentError("modulator_backward: gradient size mismatch");

    ModulatorGrads g;
    g.conv1_w.assign(params.conv1_w.size(), 0.0);
    g.conv1_b.assign(C, 0.0);
    g.conv2_w.assign(params.conv2_w.size(), 0.0);
    g.conv2_b.assign(C, 0.0);

    const ConvDims d1{trace.batch, K * C, C, trace.height, trace.width, params.kernel};
    const ConvDims d2{trace.batch, C, C, trace.height, trace.width, params.kernel};
    std::vector<double> grad_hidden(band_size, 0.0);
    conv2d_same_backward(d2, trace.hidden, params.conv2_w.values(), grad_q, grad_hidden, g.conv2_w, g.conv2_b);
    std::vector<double> grad_pre(band_size);
    for (std::size_t i = 0; i < band_size; ++i) grad_pre[i] = grad_hidden[i] * silu_grad(trace.pre_activation[i]);
    std::vector<double> grad_concat(trace.concat.size(), 0.0);
    conv2d_same_backward(d1, trace.concat, params.conv1_w.values(), grad_pre, grad_concat, g.conv1_w, g.conv1_b);

    g.bands.assign(K, std::vector<double>(grad_q.begin(), grad_q.end()));
    for (std::size_t b = 0; b < trace.batch; ++b) {
        for (std::size_t k = 0; k < K; ++k) {
            const double* src = grad_concat.data() + (b * K + k) * C * hw;
            double* dst = g.bands[k].data() + b * C * hw;
            for (std::size_t i = 0; i < C * hw; ++i) dst[i] += src[i];
        }
    }
    return g;
}

Tensor spectral_transform(const BandStack& stack, const ModulatorParams& params) {
    params.validate();
    if (stack.bands.size() != params.bands) {
        throw ArgumentError("spectral_transform: stack has " + std::to_string(stack.bands.size()) +
                            " bands, params expect " + std::to_string(params.bands));
    }
    const Tensor& first = stack.bands.front();
    require_grid(first, "spectral_transform band");
    if (first.dim(1) != params.channels) {
        throw ArgumentError("spectral_transform: latent has " + std::to_string(first.dim(1)) +
                            " channels, params expect " + std::to_string(params.channels));
    }
    std::vector<std::vector<double>> bands;
    for (const auto& b : stack.bands) {
        if (b.shape() != first.shape()) throw ArgumentError("spectral_transform: bands differ in shape");
        bands.emplace_back(b.values().begin(), b.values().end());
    }
    auto trace = modulator_forward(params, bands, first.dim(0), first.dim(2), first.dim(3));
    return first.with_values(std::move(trace.q));
}

}  // namespace prism
