#pragma once

#include "prism/band_masks.hpp"
#include "prism/tensor.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace prism {

// ---------------------------------------------------------------------------
// Spectral energy profile
// ---------------------------------------------------------------------------

struct EnergyProfile {
    std::size_t bands = 0;
    std::vector<double> e;      // sums to 1
    std::vector<double> edges;  // bands + 1 normalized radii
};

// Mask-weighted spectral power per band, averaged over every (b, c) slice and
// normalized to sum 1. Requires a normalized mask set.
EnergyProfile energy_profile(const Tensor& features, const BandMaskSet& mask_set);

// ---------------------------------------------------------------------------
// Image-space filtering
// ---------------------------------------------------------------------------

enum class FilterMode { LowPass, HighPass };

const char* filter_mode_name(FilterMode mode) noexcept;
FilterMode parse_filter_mode(const std::string& text);

// Spectral LP/HP filter of every HxW slice, before any clamping.
Tensor filter_unclamped(const Tensor& image, FilterMode mode, double rho, double taper = kDefaultTaper);
// filter_unclamped followed by clamping to [0, 1]. Input pixels must lie in [0, 1].
Tensor filter_image(const Tensor& image, FilterMode mode, double rho, double taper = kDefaultTaper);

// Binary PPM (P6, maxval 255). Pixels map to [0, 1] as value / 255; tensors are [3, H, W].
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

// Fraction of text rows whose paired image row ranks in the top k by cosine
// similarity. Ties rank the lower index first.
double retrieval_recall(const Tensor& text_emb, const Tensor& image_emb, std::size_t k);

// Expected recall and its standard deviation for N queries at chance, k/N each.
struct ChanceLevel {
    double mean = 0.0;
    double stddev = 0.0;
};
ChanceLevel chance_level(std::size_t n, std::size_t k);

class EmbeddingSource {
public:
    virtual ~EmbeddingSource() = default;
    virtual Tensor text_embeddings() const = 0;
    virtual Tensor image_embeddings(FilterMode mode, double cutoff) const = 0;
};

// Embeddings produced by an external exporter:
//   text file [N, D]; image files <dir>/image_<lp|hp>_<cutoff with 2 decimals>.pzt, each [N, D].
class PztEmbeddingSource : public EmbeddingSource {
public:
    PztEmbeddingSource(std::filesystem::path text_file, std::filesystem::path image_dir);

    static std::string image_file_name(FilterMode mode, double cutoff);

    Tensor text_embeddings() const override;
    Tensor image_embeddings(FilterMode mode, double cutoff) const override;

private:
    std::filesystem::path text_file_;
    std::filesystem::path image_dir_;
};

// Built-in stand-in for a semantic encoder: center pixels at 0.5, keep only
// frequencies below `semantic_cutoff`, project with a fixed seeded Gaussian
// matrix to `dim` values and L2-normalize. Text embeddings are the embedding of
// the unfiltered image plus seeded Gaussian noise (cosine about 0.9).
class SyntheticEncoderSource : public EmbeddingSource {
public:
    struct Options {
        std::size_t count = 500;
        std::size_t image_size = 32;
        std::size_t dim = 64;
        double semantic_cutoff = 0.3;
        double text_noise = 0.0605;  // per-component sigma on the unit embedding
        double taper = kDefaultTaper;
        std::uint64_t seed = 0;
    };

    explicit SyntheticEncoderSource(Options options);

    const Tensor& images() const noexcept { return images_; }
    Tensor encode(const Tensor& images) const;

    Tensor text_embeddings() const override;
    Tensor image_embeddings(FilterMode mode, double cutoff) const override;

private:
    Options options_;
    Tensor images_;      // [N, 3, S, S]
    Tensor projection_;  // [dim, 3 * S * S]
    Tensor text_;
};

struct RetrievalCurve {
    FilterMode mode = FilterMode::LowPass;
    std::size_t k = 5;
    std::vector<double> cutoffs;
    std::vector<double> recall_at_k;
    // Adjacent pairs breaking nondecreasing (lp) / nonincreasing (hp) order.
    double violation_fraction = 0.0;
    double max_violation = 0.0;
    std::size_t violations = 0;
};

RetrievalCurve retrieval_sweep(const EmbeddingSource& source, const std::vector<double>& cutoffs, FilterMode mode,
                               std::size_t k = 5);

}  // namespace prism
