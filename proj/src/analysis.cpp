#include "prism/analysis.hpp"

#include "prism/errors.hpp"
#include "prism/pzt.hpp"
#include "prism/rng.hpp"
#include "prism/spectral.hpp"
#include "prism/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <iterator>

namespace prism {

EnergyProfile energy_profile(const Tensor& features, const BandMaskSet& mask_set) {
    require_grid(features, "energy_profile features");
    if (!mask_set.normalized) throw ArgumentError("energy_profile needs a normalized mask set");
    const std::size_t h = features.dim(2);
    const std::size_t w = features.dim(3);
    if (h != mask_set.height || w != mask_set.width) {
        throw ArgumentError("energy_profile: mask grid does not match feature grid " + shape_string(features.shape()));
    }
    const Spectrum s = dft2(features);
    const std::size_t hw = h * w;
    const std::size_t slices = s.slice_count();

    std::vector<double> power(hw, 0.0);
    for (std::size_t base = 0; base < s.re.size(); base += hw) {
        for (std::size_t i = 0; i < hw; ++i) power[i] += s.re[base + i] * s.re[base + i] + s.im[base + i] * s.im[base + i];
    }
    EnergyProfile profile;
    profile.bands = mask_set.bands;
    profile.edges = mask_set.edges;
    profile.e.assign(mask_set.bands, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < mask_set.bands; ++k) {
        double e = 0.0;
        for (std::size_t i = 0; i < hw; ++i) e += mask_set.masks[k][i] * power[i];
        profile.e[k] = e / static_cast<double>(slices);
        total += profile.e[k];
    }
    if (!(total > 0.0)) throw ArgumentError("energy_profile: features carry no energy");
    for (double& e : profile.e) e /= total;
    return profile;
}

const char* filter_mode_name(FilterMode mode) noexcept {
    return mode == FilterMode::LowPass ? "lp" : "hp";
}

FilterMode parse_filter_mode(const std::string& text) {
    if (text == "lp") return FilterMode::LowPass;
    if (text == "hp") return FilterMode::HighPass;
    throw ArgumentError("filter mode must be 'lp' or 'hp', got '" + text + "'");
}

Tensor filter_unclamped(const Tensor& image, FilterMode mode, double rho, double taper) {
    if (image.rank() < 2) throw ArgumentError("filter: image needs at least two axes");
    const std::size_t h = image.dim(image.rank() - 2);
    const std::size_t w = image.dim(image.rank() - 1);
    const CutoffMaskPair pair = cutoff_masks(h, w, rho, taper);
    const Tensor& mask = mode == FilterMode::LowPass ? pair.lp : pair.hp;
    Spectrum s = dft2(image);
    for (std::size_t base = 0; base < s.re.size(); base += h * w) {
        for (std::size_t i = 0; i < h * w; ++i) {
            s.re[base + i] *= mask[i];
            s.im[base + i] *= mask[i];
        }
    }
    double scale = 1.0;
    for (double v : image.values()) scale = std::max(scale, std::abs(v));
    return idft2(s, 1e-6 * scale);
}

Tensor filter_image(const Tensor& image, FilterMode mode, double rho, double taper) {
    for (double v : image.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("filter_image: pixel values must lie in [0, 1]");
    }
    const Tensor raw = filter_unclamped(image, mode, rho, taper);
    std::vector<double> out(raw.values().begin(), raw.values().end());
    for (double& v : out) v = std::clamp(v, 0.0, 1.0);
    return raw.with_values(std::move(out));
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in, const std::string& path) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!token.empty()) return token;
            continue;
        }
        token.push_back(static_cast<char>(c));
    }
    if (token.empty()) throw LengthError(path + ": PPM header truncated");
    return token;
}

std::size_t ppm_number(std::istream& in, const std::string& path, const char* field) {
    const std::string token = ppm_token(in, path);
    if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit)) {
        throw FormatError(field, path + ": expected a decimal number, got '" + token + "'");
    }
    return std::stoul(token);
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError(path.string(), "cannot open for reading");
    const std::string p = path.string();
    if (ppm_token(in, p) != "P6") throw FormatError("magic", p + ": expected binary PPM 'P6'");
    const std::size_t width = ppm_number(in, p, "width");
    const std::size_t height = ppm_number(in, p, "height");
    const std::size_t maxval = ppm_number(in, p, "maxval");
    if (width == 0 || height == 0) throw FormatError("dims", p + ": zero image size");
    if (maxval != 255) throw FormatError("maxval", p + ": only maxval 255 is supported");
    // ppm_token consumed exactly one whitespace byte after maxval.
    std::vector<unsigned char> raw(3 * width * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw LengthError(p + ": PPM pixel data truncated");
    std::vector<double> values(raw.size());
    const std::size_t hw = width * height;
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < 3; ++c) values[c * hw + i] = static_cast<double>(raw[3 * i + c]) / 255.0;
    }
    return Tensor({3, height, width}, std::move(values), DType::F32);
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ArgumentError("write_ppm expects a [3,H,W] image, got " + shape_string(image.shape()));
    }
    const std::size_t height = image.dim(1);
    const std::size_t width = image.dim(2);
    const std::size_t hw = height * width;
    std::string data = fmt::format("P6\n{} {}\n255\n", width, height);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::round(std::clamp(image[c * hw + i], 0.0, 1.0) * 255.0);
            data.push_back(static_cast<char>(static_cast<unsigned char>(v)));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError(path.string(), "cannot open for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw StorageError(path.string(), "write failed");
}

namespace {

std::vector<double> unit_rows(const Tensor& emb, const char* which) {
    const std::size_t n = emb.dim(0);
    const std::size_t d = emb.dim(1);
    std::vector<double> out(emb.values().begin(), emb.values().end());
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += out[i * d + j] * out[i * d + j];
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) throw ArgumentError(std::string("retrieval: zero-norm ") + which + " row " + std::to_string(i));
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= norm;
    }
    return out;
}

}  // namespace

double retrieval_recall(const Tensor& text_emb, const Tensor& image_emb, std::size_t k) {
    if (text_emb.rank() != 2 || image_emb.rank() != 2 || text_emb.shape() != image_emb.shape()) {
        throw ArgumentError("retrieval: embeddings must both be [N,D], got " + shape_string(text_emb.shape()) + " and " +
                            shape_string(image_emb.shape()));
    }
    if (k == 0) throw ArgumentError("retrieval: k must be >= 1");
    const std::size_t n = text_emb.dim(0);
    const std::size_t d = text_emb.dim(1);
    const auto text = unit_rows(text_emb, "text");
    const auto image = unit_rows(image_emb, "image");
    std::size_t hits = 0;
    std::vector<double> sim(n);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < d; ++t) dot += text[q * d + t] * image[j * d + t];
            sim[j] = dot;
        }
        // Rank of the true match under (similarity desc, index asc).
        std::size_t rank = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (sim[j] > sim[q] || (sim[j] == sim[q] && j < q)) ++rank;
        }
        if (rank < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

ChanceLevel chance_level(std::size_t n, std::size_t k) {
    const double p = std::min(1.0, static_cast<double>(k) / static_cast<double>(n));
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

PztEmbeddingSource::PztEmbeddingSource(std::filesystem::path text_file, std::filesystem::path image_dir)
    : text_file_(std::move(text_file)), image_dir_(std::move(image_dir)) {}

std::string PztEmbeddingSource::image_file_name(FilterMode mode, double cutoff) {
    return fmt::format("image_{}_{:.2f}.pzt", filter_mode_name(mode), cutoff);
}

Tensor PztEmbeddingSource::text_embeddings() const {
    if (!std::filesystem::exists(text_file_)) throw InputError("text embedding file missing: " + text_file_.string());
    return load_tensor(text_file_);
}

Tensor PztEmbeddingSource::image_embeddings(FilterMode mode, double cutoff) const {
    const auto path = image_dir_ / image_file_name(mode, cutoff);
    if (!std::filesystem::exists(path)) {
        throw InputError(fmt::format("no image embeddings for cutoff {:.2f} ({}): {}", cutoff, filter_mode_name(mode),
                                     path.string()));
    }
    return load_tensor(path);
}

namespace {

constexpr std::uint64_t kImageStream = 1;
constexpr std::uint64_t kProjectionStream = 2;
constexpr std::uint64_t kTextStream = 3;

}  // namespace

SyntheticEncoderSource::SyntheticEncoderSource(Options options) : options_(options) {
    if (options_.count == 0 || options_.dim == 0 || options_.image_size == 0) {
        throw ArgumentError("synthetic encoder: count, dim and image size must be positive");
    }
    SeededRng image_rng(derive_seed(options_.seed, kImageStream));
    SinusoidMixture spec;
    spec.count = options_.count;
    spec.channels = 3;
    spec.height = options_.image_size;
    spec.width = options_.image_size;
    spec.components = 4;
    spec.max_frequency = 3;
    spec.texture_sigma = 0.05;
    images_ = sinusoid_mixture_images(spec, image_rng);

    const std::size_t pixels = 3 * options_.image_size * options_.image_size;
    SeededRng proj_rng(derive_seed(options_.seed, kProjectionStream));
    projection_ = gaussian_tensor(proj_rng, {options_.dim, pixels}, 0.0, 1.0 / std::sqrt(static_cast<double>(pixels)),
                                  DType::F64);

    const Tensor clean = encode(images_);
    SeededRng text_rng(derive_seed(options_.seed, kTextStream));
    std::vector<double> text(clean.values().begin(), clean.values().end());
    for (double& v : text) v += text_rng.gaussian(0.0, options_.text_noise);
    text_ = clean.with_values(std::move(text));
}

Tensor SyntheticEncoderSource::encode(const Tensor& images) const {
    require_grid(images, "synthetic encoder input");
    std::vector<double> centered(images.values().begin(), images.values().end());
    for (double& v : centered) v -= 0.5;
    const Tensor low = filter_unclamped(images.with_values(std::move(centered)).as(DType::F64), FilterMode::LowPass,
                                        options_.semantic_cutoff, options_.taper);
    const std::size_t n = images.dim(0);
    const std::size_t pixels = images.size() / n;
    if (pixels != projection_.dim(1)) throw ArgumentError("synthetic encoder: image size mismatch");
    const std::size_t dim = options_.dim;
    std::vector<double> out(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t r = 0; r < dim; ++r) {
            double acc = 0.0;
            for (std::size_t p = 0; p < pixels; ++p) acc += projection_[r * pixels + p] * low[i * pixels + p];
            out[i * dim + r] = acc;
            norm += acc * acc;
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t r = 0; r < dim; ++r) out[i * dim + r] /= norm;
        }
    }
    return Tensor({n, dim}, std::move(out));
}

Tensor SyntheticEncoderSource::text_embeddings() const {
    return text_;
}

Tensor SyntheticEncoderSource::image_embeddings(FilterMode mode, double cutoff) const {
    return encode(filter_image(images_, mode, cutoff, options_.taper));
}

RetrievalCurve retrieval_sweep(const EmbeddingSource& source, const std::vector<double>& cutoffs, FilterMode mode,
                               std::size_t k) {
    if (cutoffs.empty()) throw ArgumentError("retrieval_sweep: no cutoffs");
    RetrievalCurve curve;
    curve.mode = mode;
    curve.k = k;
    curve.cutoffs = cutoffs;
    const Tensor text = source.text_embeddings();
    for (double rho : cutoffs) {
        curve.recall_at_k.push_back(retrieval_recall(text, source.image_embeddings(mode, rho), k));
    }
    for (std::size_t i = 1; i < curve.recall_at_k.size(); ++i) {
        const double step = curve.recall_at_k[i] - curve.recall_at_k[i - 1];
        const double drop = mode == FilterMode::LowPass ? -step : step;
        if (drop > 0.0) {
            ++curve.violations;
            curve.max_violation = std::max(curve.max_violation, drop);
        }
    }
    if (cutoffs.size() > 1) {
        curve.violation_fraction = static_cast<double>(curve.violations) / static_cast<double>(cutoffs.size() - 1);
    }
    return curve;
}

}  // namespace prism
