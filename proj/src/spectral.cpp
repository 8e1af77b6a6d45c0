#include "prism/spectral.hpp"

#include "prism/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

namespace prism {

namespace {

bool is_power_of_two(std::size_t n) {
    return std::has_single_bit(n);
}

// Unscaled in-place radix-2 transform; sign -1 forward, +1 inverse.
class Radix2 {
public:
    explicit Radix2(std::size_t n) : n_(n), twiddle_(n / 2) {
        for (std::size_t j = 0; j < n / 2; ++j) {
            const double a = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
            twiddle_[j] = Complex(std::cos(a), std::sin(a));
        }
        bitrev_.resize(n);
        const int bits = std::countr_zero(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
            bitrev_[i] = r;
        }
    }

    void run(std::span<Complex> a, bool inverse) const {
        for (std::size_t i = 0; i < n_; ++i) {
            if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
        }
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t stride = n_ / len;
            for (std::size_t start = 0; start < n_; start += len) {
                for (std::size_t j = 0; j < half; ++j) {
                    Complex w = twiddle_[j * stride];
                    if (inverse) w = std::conj(w);
                    const Complex u = a[start + j];
                    const Complex v = a[start + j + half] * w;
                    a[start + j] = u + v;
                    a[start + j + half] = u - v;
                }
            }
        }
    }

private:
    std::size_t n_;
    std::vector<Complex> twiddle_;
    std::vector<std::size_t> bitrev_;
};

}  // namespace

struct Fft1d::Impl {
    std::size_t n;
    double scale;
    Radix2 core;  // length n, or the padded Bluestein length
    bool bluestein;
    std::vector<Complex> chirp;         // exp(-i pi k^2 / n), k < n
    std::vector<Complex> kernel_fft;    // transform of the conjugate chirp, padded
    mutable std::vector<Complex> work;  // one transform at a time per instance

    static std::size_t padded(std::size_t n) {
        return is_power_of_two(n) ? n : std::bit_ceil(2 * n - 1);
    }

    explicit Impl(std::size_t len)
        : n(len), scale(1.0 / std::sqrt(static_cast<double>(len))), core(padded(len)), bluestein(!is_power_of_two(len)) {
        if (!bluestein) return;
        const std::size_t m = padded(n);
        chirp.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the angle argument small and exact.
            const std::size_t k2 = (k * k) % (2 * n);
            const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
            chirp[k] = Complex(std::cos(a), std::sin(a));
        }
        kernel_fft.assign(m, Complex(0.0, 0.0));
        kernel_fft[0] = std::conj(chirp[0]);
        for (std::size_t k = 1; k < n; ++k) {
            kernel_fft[k] = std::conj(chirp[k]);
            kernel_fft[m - k] = std::conj(chirp[k]);
        }
        core.run(kernel_fft, false);
        work.resize(m);
    }

    void run(std::span<Complex> data, bool inverse) const {
        if (!bluestein) {
            core.run(data, inverse);
        } else {
            // The inverse is the conjugate of the forward transform of the conjugate.
            const std::size_t m = work.size();
            for (std::size_t k = 0; k < n; ++k) {
                const Complex x = inverse ? std::conj(data[k]) : data[k];
                work[k] = x * chirp[k];
            }
            std::fill(work.begin() + static_cast<std::ptrdiff_t>(n), work.end(), Complex(0.0, 0.0));
            core.run(work, false);
            for (std::size_t i = 0; i < m; ++i) work[i] *= kernel_fft[i];
            core.run(work, true);
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t k = 0; k < n; ++k) {
                const Complex y = work[k] * inv_m * chirp[k];
                data[k] = inverse ? std::conj(y) : y;
            }
        }
        for (auto& v : data) v *= scale;
    }
};

Fft1d::Fft1d(std::size_t n) : n_(n) {
    if (n == 0) throw ArgumentError("FFT length must be >= 1");
    impl_ = std::make_unique<Impl>(n);
}

Fft1d::~Fft1d() = default;
Fft1d::Fft1d(Fft1d&&) noexcept = default;
Fft1d& Fft1d::operator=(Fft1d&&) noexcept = default;

void Fft1d::forward(std::span<Complex> data) const {
    if (data.size() != n_) throw ArgumentError("FFT input length mismatch");
    impl_->run(data, false);
}

void Fft1d::inverse(std::span<Complex> data) const {
    if (data.size() != n_) throw ArgumentError("FFT input length mismatch");
    impl_->run(data, true);
}

Fft2d::Fft2d(std::size_t height, std::size_t width) : rows_(height), cols_(width) {}

void Fft2d::forward(std::span<const double> real, std::span<Complex> out) const {
    std::transform(real.begin(), real.end(), out.begin(), [](double v) { return Complex(v, 0.0); });
    transform(out, false);
}

void Fft2d::forward(std::span<Complex> data) const {
    transform(data, false);
}

void Fft2d::inverse(std::span<Complex> data) const {
    transform(data, true);
}

void Fft2d::transform(std::span<Complex> data, bool inverse) const {
    const std::size_t h = height();
    const std::size_t w = width();
    if (data.size() != h * w) throw ArgumentError("2D FFT slice size mismatch");
    for (std::size_t r = 0; r < h; ++r) {
        auto row = data.subspan(r * w, w);
        inverse ? cols_.inverse(row) : cols_.forward(row);
    }
    std::vector<Complex> column(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) column[r] = data[r * w + c];
        inverse ? rows_.inverse(column) : rows_.forward(column);
        for (std::size_t r = 0; r < h; ++r) data[r * w + c] = column[r];
    }
}

Spectrum dft2(const Tensor& x) {
    if (x.rank() < 2) throw ArgumentError("dft2 needs at least two axes, got " + shape_string(x.shape()));
    Spectrum s;
    s.shape = x.shape();
    s.source_dtype = x.dtype();
    const std::size_t h = s.height();
    const std::size_t w = s.width();
    const Fft2d fft(h, w);
    s.re.resize(x.size());
    s.im.resize(x.size());
    std::vector<Complex> slice(h * w);
    const auto values = x.values();
    for (std::size_t base = 0; base < x.size(); base += h * w) {
        fft.forward(values.subspan(base, h * w), slice);
        for (std::size_t i = 0; i < h * w; ++i) {
            s.re[base + i] = slice[i].real();
            s.im[base + i] = slice[i].imag();
        }
    }
    return s;
}

RealInverse idft2_checked(const Spectrum& s) {
    if (s.shape.size() < 2 || s.re.size() != element_count(s.shape) || s.im.size() != s.re.size()) {
        throw ArgumentError("malformed spectrum");
    }
    const std::size_t h = s.height();
    const std::size_t w = s.width();
    const Fft2d fft(h, w);
    std::vector<double> out(s.re.size());
    std::vector<Complex> slice(h * w);
    double residue = 0.0;
    for (std::size_t base = 0; base < s.re.size(); base += h * w) {
        for (std::size_t i = 0; i < h * w; ++i) slice[i] = Complex(s.re[base + i], s.im[base + i]);
        fft.inverse(slice);
        for (std::size_t i = 0; i < h * w; ++i) {
            out[base + i] = slice[i].real();
            residue = std::max(residue, std::abs(slice[i].imag()));
        }
    }
    return {Tensor(s.shape, std::move(out), s.source_dtype), residue};
}

Tensor idft2(const Spectrum& s, double imag_tolerance) {
    auto result = idft2_checked(s);
    if (result.max_imag > imag_tolerance) throw SymmetryError(result.max_imag, imag_tolerance);
    return std::move(result.real);
}

double total_energy(const Tensor& x) {
    double e = 0.0;
    for (double v : x.values()) e += v * v;
    return e;
}

double spectral_energy(const Spectrum& s) {
    double e = 0.0;
    for (std::size_t i = 0; i < s.re.size(); ++i) e += s.re[i] * s.re[i] + s.im[i] * s.im[i];
    return e;
}

}  // namespace prism
