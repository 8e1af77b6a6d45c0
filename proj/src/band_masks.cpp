#include "prism/band_masks.hpp"

#include "prism/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prism {

namespace {

double signed_frequency(std::size_t index, std::size_t n) {
    const auto i = static_cast<double>(index);
    const auto len = static_cast<double>(n);
    return 2 * index <= n ? i / len : (i - len) / len;
}

}  // namespace

Tensor normalized_radius(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ArgumentError("normalized_radius: grid must be at least 1x1");
    const double r_max = std::sqrt(0.5);
    std::vector<double> r(height * width);
    for (std::size_t u = 0; u < height; ++u) {
        const double fu = signed_frequency(u, height);
        for (std::size_t v = 0; v < width; ++v) {
            const double fv = signed_frequency(v, width);
            r[u * width + v] = std::min(1.0, std::sqrt(fu * fu + fv * fv) / r_max);
        }
    }
    return Tensor({height, width}, std::move(r));
}

double raised_cosine_step(double r, double edge, double taper) {
    if (taper <= 0.0) return r <= edge ? 1.0 : 0.0;
    if (r <= edge - taper) return 1.0;
    if (r >= edge + taper) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (r - edge + taper) / (2.0 * taper)));
}

Tensor BandMaskSet::stacked() const {
    std::vector<double> all;
    all.reserve(bands * height * width);
    for (const auto& m : masks) all.insert(all.end(), m.values().begin(), m.values().end());
    return Tensor({bands, height, width}, std::move(all));
}

BandMaskSet ring_masks(std::size_t height, std::size_t width, std::size_t bands, double taper, bool normalized) {
    if (bands == 0) throw ArgumentError("ring_masks: band count must be >= 1");
    const double ring_width = 1.0 / static_cast<double>(bands);
    if (!(taper >= 0.0) || taper >= ring_width / 2.0) {
        throw ArgumentError("ring_masks: taper " + std::to_string(taper) + " must lie in [0, " +
                            std::to_string(ring_width / 2.0) + ") for " + std::to_string(bands) + " bands");
    }
    const Tensor radius = normalized_radius(height, width);
    const std::size_t n = height * width;

    BandMaskSet set;
    set.bands = bands;
    set.height = height;
    set.width = width;
    set.taper = taper;
    set.normalized = normalized;
    set.edges.resize(bands + 1);
    for (std::size_t k = 0; k <= bands; ++k) set.edges[k] = static_cast<double>(k) * ring_width;
    set.edges.back() = 1.0;

    std::vector<std::vector<double>> weight(bands, std::vector<double>(n));
    for (std::size_t k = 0; k < bands; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const double r = radius[i];
            const double rise = k == 0 ? 1.0 : 1.0 - raised_cosine_step(r, set.edges[k], taper);
            const double fall = k + 1 == bands ? 1.0 : raised_cosine_step(r, set.edges[k + 1], taper);
            weight[k][i] = rise * fall;
        }
    }
    if (normalized) {
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < bands; ++k) sum += weight[k][i];
            for (std::size_t k = 0; k < bands; ++k) weight[k][i] /= sum;
        }
    }

    std::vector<std::vector<double>> projector = weight;
    if (normalized) {
        for (std::size_t i = 0; i < n; ++i) {
            double remaining = 0.0;
            for (std::size_t k = bands; k-- > 0;) {
                remaining += weight[k][i];
                projector[k][i] = remaining > 0.0 ? std::clamp(weight[k][i] / remaining, 0.0, 1.0) : 0.0;
            }
        }
    }

    for (std::size_t k = 0; k < bands; ++k) {
        set.masks.emplace_back(Shape{height, width}, std::move(weight[k]));
        set.projectors.emplace_back(Shape{height, width}, std::move(projector[k]));
    }
    return set;
}

CutoffMaskPair cutoff_masks(std::size_t height, std::size_t width, double rho, double taper) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ArgumentError("cutoff_masks: rho must lie in (0, 1], got " + std::to_string(rho));
    if (!(taper >= 0.0)) throw ArgumentError("cutoff_masks: taper must be >= 0");
    const double half_width = std::min(taper, 1.0 - rho);
    const Tensor radius = normalized_radius(height, width);
    std::vector<double> lp(radius.size());
    std::vector<double> hp(radius.size());
    for (std::size_t i = 0; i < radius.size(); ++i) {
        lp[i] = raised_cosine_step(radius[i], rho, half_width);
        hp[i] = 1.0 - lp[i];
    }
    return {Tensor({height, width}, std::move(lp)), Tensor({height, width}, std::move(hp)), rho, taper};
}

}  // namespace prism
