#include "oracles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <unistd.h>

namespace oracle {

std::vector<Complex> dft2(const std::vector<Complex>& x, std::size_t h, std::size_t w, bool inverse) {
    const double sign = inverse ? 1.0 : -1.0;
    const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
    std::vector<Complex> out(h * w);
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            Complex acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    // Reduce the phase index exactly before scaling to keep the angle small.
                    const double turns = static_cast<double>((u * y) % h) / static_cast<double>(h) +
                                         static_cast<double>((v * xx) % w) / static_cast<double>(w);
                    const double angle = sign * 2.0 * std::numbers::pi * turns;
                    acc += x[y * w + xx] * Complex(std::cos(angle), std::sin(angle));
                }
            }
            out[u * w + v] = acc * scale;
        }
    }
    return out;
}

std::vector<Complex> dft2_real(std::span<const double> x, std::size_t h, std::size_t w) {
    return dft2(std::vector<Complex>(x.begin(), x.end()), h, w, false);
}

namespace {

// twiddle[j] = exp(-2 pi i j / n), j < n.
std::vector<Complex> twiddles(std::size_t n) {
    std::vector<Complex> t(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        t[j] = Complex(std::cos(angle), std::sin(angle));
    }
    return t;
}

}  // namespace

std::vector<Complex> dft2_separable(std::span<const double> x, std::size_t h, std::size_t w) {
    const auto th = twiddles(h);
    const auto tw = twiddles(w);
    std::vector<Complex> rows(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t v = 0; v < w; ++v) {
            Complex acc = 0.0;
            for (std::size_t xx = 0; xx < w; ++xx) acc += x[y * w + xx] * tw[(v * xx) % w];
            rows[y * w + v] = acc;
        }
    const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
    std::vector<Complex> out(h * w);
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
            Complex acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) acc += rows[y * w + v] * th[(u * y) % h];
            out[u * w + v] = acc * scale;
        }
    return out;
}

double radius(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
    const double fu = (2 * u <= h) ? static_cast<double>(u) / h : (static_cast<double>(u) - h) / h;
    const double fv = (2 * v <= w) ? static_cast<double>(v) / w : (static_cast<double>(v) - w) / w;
    return std::min(1.0, std::sqrt(fu * fu + fv * fv) / std::sqrt(0.5));
}

std::vector<double> project(std::span<const double> x, std::span<const double> mask, std::size_t h, std::size_t w) {
    auto spec = dft2_real(x, h, w);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= mask[i];
    const auto back = dft2(spec, h, w, true);
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = back[i].real();
    return out;
}

std::vector<std::vector<double>> split(std::span<const double> z, std::size_t slices, std::size_t h, std::size_t w,
                                       const std::vector<prism::Tensor>& projectors, std::vector<double>& residual) {
    const std::size_t hw = h * w;
    std::vector<std::vector<double>> bands(projectors.size(), std::vector<double>(slices * hw));
    residual.assign(z.begin(), z.end());
    for (std::size_t k = 0; k < projectors.size(); ++k) {
        for (std::size_t s = 0; s < slices; ++s) {
            const auto band = project(std::span(residual).subspan(s * hw, hw), projectors[k].values(), h, w);
            for (std::size_t i = 0; i < hw; ++i) {
                bands[k][s * hw + i] = band[i];
                residual[s * hw + i] -= band[i];
            }
        }
    }
    return bands;
}

std::vector<double> conv2d(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                           std::size_t batch, std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd,
                           std::size_t k) {
    const long half = static_cast<long>(k / 2);
    std::vector<double> y(batch * cout * h * wd);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < wd; ++c) {
                    double acc = bias[o];
                    for (std::size_t i = 0; i < cin; ++i) {
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long sr = static_cast<long>(r) + static_cast<long>(ky) - half;
                                const long sc = static_cast<long>(c) + static_cast<long>(kx) - half;
                                if (sr < 0 || sc < 0 || sr >= static_cast<long>(h) || sc >= static_cast<long>(wd)) continue;
                                acc += w[((o * cin + i) * k + ky) * k + kx] *
                                       x[((b * cin + i) * h + static_cast<std::size_t>(sr)) * wd + static_cast<std::size_t>(sc)];
                            }
                        }
                    }
                    y[((b * cout + o) * h + r) * wd + c] = acc;
                }
            }
        }
    }
    return y;
}

double recall(const prism::Tensor& text, const prism::Tensor& image, std::size_t k) {
    const std::size_t n = text.dim(0);
    const std::size_t d = text.dim(1);
    auto norm = [&](const prism::Tensor& t, std::size_t row) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += t[row * d + j] * t[row * d + j];
        return std::sqrt(s);
    };
    std::size_t hits = 0;
    for (std::size_t q = 0; q < n; ++q) {
        std::vector<double> sim(n);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += text[q * d + j] * image[i * d + j];
            sim[i] = dot / (norm(text, q) * norm(image, i));
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
        const auto pos = std::find(order.begin(), order.end(), q) - order.begin();
        if (static_cast<std::size_t>(pos) < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<double> white_noise_profile(const prism::BandMaskSet& set) {
    std::vector<double> e(set.bands);
    double total = 0.0;
    for (std::size_t k = 0; k < set.bands; ++k) {
        for (double m : set.masks[k].values()) e[k] += m;
        total += e[k];
    }
    for (double& v : e) v /= total;
    return e;
}

namespace {

double silu(double x) {
    return x / (1.0 + std::exp(-x));
}

}  // namespace

ToyLoss toy_forward(const prism::ToyModel& m, const prism::Tensor& images, std::size_t k_base) {
    const std::size_t B = images.dim(0);
    const std::size_t Hi = images.dim(2);
    const std::size_t Wi = images.dim(3);
    const std::size_t p = m.config.patch;
    const std::size_t C = m.config.channels;
    const std::size_t K = m.config.bands;
    const std::size_t P = 3 * p * p;
    const std::size_t gh = Hi / p;
    const std::size_t gw = Wi / p;
    const std::size_t hw = gh * gw;
    auto pixel = [&](std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
        return images[((b * 3 + ch) * Hi + y) * Wi + x];
    };

    auto encode = [&](const prism::Tensor& w, const prism::Tensor& bias) {
        std::vector<double> z(B * C * hw);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t gy = 0; gy < gh; ++gy)
                    for (std::size_t gx = 0; gx < gw; ++gx) {
                        double acc = bias[c];
                        for (std::size_t ch = 0; ch < 3; ++ch)
                            for (std::size_t py = 0; py < p; ++py)
                                for (std::size_t px = 0; px < p; ++px)
                                    acc += pixel(b, ch, gy * p + py, gx * p + px) * w[((ch * p + py) * p + px) * C + c];
                        z[((b * C + c) * gh + gy) * gw + gx] = acc;
                    }
        return z;
    };
    const auto set = prism::ring_masks(gh, gw, K, m.config.taper, true);
    std::vector<double> residual;
    const auto student = split(encode(m.enc_w, m.enc_b), B * C, gh, gw, set.projectors, residual);
    const auto teacher = split(encode(m.teacher_w, m.teacher_b), B * C, gh, gw, set.projectors, residual);

    std::vector<double> concat(B * K * C * hw);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < hw; ++i) concat[((b * K + k) * C + c) * hw + i] = student[k][(b * C + c) * hw + i];
    auto hidden = conv2d(concat, m.mod.conv1_w.values(), m.mod.conv1_b.values(), B, K * C, C, gh, gw, m.mod.kernel);
    for (double& v : hidden) v = silu(v);
    const auto delta = conv2d(hidden, m.mod.conv2_w.values(), m.mod.conv2_b.values(), B, C, C, gh, gw, m.mod.kernel);

    ToyLoss loss;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < Hi; ++y)
                for (std::size_t x = 0; x < Wi; ++x) {
                    const std::size_t d = (ch * p + y % p) * p + x % p;
                    const std::size_t cell = (y / p) * gw + x / p;
                    double r = m.dec_b[d];
                    for (std::size_t c = 0; c < C; ++c) {
                        double q = 0.0;
                        for (std::size_t k = 0; k < K; ++k) q += student[k][(b * C + c) * hw + cell];
                        q += delta[(b * C + c) * hw + cell];
                        r += q * m.dec_w[c * P + d];
                    }
                    const double e = r - pixel(b, ch, y, x);
                    loss.l_pix += e * e;
                }
    loss.l_pix /= static_cast<double>(images.size());
    for (std::size_t k = 0; k < k_base; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < student[k].size(); ++i) s += (student[k][i] - teacher[k][i]) * (student[k][i] - teacher[k][i]);
        loss.l_sem += s / static_cast<double>(student[k].size());
    }
    loss.l_sem /= static_cast<double>(k_base);
    return loss;
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("prism_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace oracle
