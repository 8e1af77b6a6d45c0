#pragma once

#include "prism/key_value.hpp"
#include "prism/modulator.hpp"
#include "prism/objectives.hpp"
#include "prism/rng.hpp"
#include "prism/split_flow.hpp"
#include "prism/synthetic.hpp"
#include "prism/tensor.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace prism {

struct ToyModelConfig {
    std::size_t patch = 4;
    std::size_t channels = 8;
    std::size_t bands = 4;
    std::size_t kernel = 3;
    double taper = kDefaultTaper;
};

// Linear patch encoder/decoder around the split flow and modulator. The teacher
// is a frozen copy of the encoder taken at construction. All parameters are f64.
struct ToyModel {
    ToyModelConfig config;
    Tensor enc_w;      // [3p^2, C]
    Tensor enc_b;      // [C]
    Tensor teacher_w;  // [3p^2, C], frozen
    Tensor teacher_b;  // [C], frozen
    ModulatorParams mod;
    Tensor dec_w;  // [C, 3p^2]
    Tensor dec_b;  // [3p^2]

    static ToyModel init(const ToyModelConfig& config, SeededRng& rng);

    std::size_t patch_dim() const noexcept { return 3 * config.patch * config.patch; }
    void validate() const;
    bool all_finite() const;
};

// Names of the trainable tensors, in a fixed order.
std::vector<std::string> trainable_names();
const Tensor& trainable(const ToyModel& model, const std::string& name);
void set_trainable(ToyModel& model, const std::string& name, Tensor value);

struct TrainConfig {
    int stage = 1;
    long steps = 200;
    double learning_rate = 0.04;
    std::size_t batch_size = 16;
    double lambda_sem = 1.0;
    std::size_t k_base = 1;
    std::uint64_t seed = 0;
    NoisePolicy noise;

    // Throws ArgumentError on a bad stage, k_base, or noise outside stage 3.
    void validate(std::size_t bands) const;
    bool encoder_frozen() const noexcept { return stage == 1; }
};

// Everything the backward pass needs from one forward pass.
struct ToyCache {
    std::size_t batch = 0;
    std::size_t image_h = 0;
    std::size_t image_w = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    double lambda_sem = 1.0;
    std::size_t k_base = 1;
    std::vector<double> images;   // [B, 3, Hi, Wi]
    std::vector<double> patches;  // [B, T, P]
    std::vector<std::vector<double>> student_bands;
    std::vector<std::vector<double>> teacher_bands;
    NoiseOutcome noise;  // noised student bands and the keep mask
    ModulatorTrace modulator;
    std::vector<double> recon;  // [B, 3, Hi, Wi]
    BandMaskSet mask_set;
};

struct ToyForward {
    Tensor recon;
    LossReport report;
    ToyCache cache;
};

ToyForward forward(const ToyModel& model, const Tensor& images, const TrainConfig& config, SeededRng& rng);
// Forward pass that reuses an earlier noise draw instead of sampling a new one.
ToyForward forward_replay(const ToyModel& model, const Tensor& images, const TrainConfig& config,
                          const NoiseOutcome& frozen);

struct ToyGradients {
    std::vector<std::pair<std::string, std::vector<double>>> tensors;  // trainable_names() order
    bool encoder_used = true;  // false in stage 1: encoder entries are reported but not applied

    const std::vector<double>& get(const std::string& name) const;
};

ToyGradients backward(const ToyModel& model, const ToyCache& cache, bool encoder_frozen = false);

// Plain gradient descent step; skips the encoder when its gradients are flagged unused.
void apply_update(ToyModel& model, const ToyGradients& grads, double learning_rate);

// Clean (noise off) pixel loss over a dataset.
double reconstruction_loss(const ToyModel& model, const Tensor& dataset);

struct TrainLogRow {
    long step = 0;
    int stage = 1;
    LossReport report;
    std::size_t corrupted = 0;  // replaced (item, band) pairs in the batch
};

struct TrainResult {
    ToyModel model;
    std::vector<TrainLogRow> log;
    std::vector<double> stage_start_sem;  // l_sem at the first step of each stage
    std::vector<double> stage_end_sem;    // l_sem at the last step of each stage
};

// Runs the schedule in order; stages must be ascending. Throws DivergenceError on
// a non-finite loss.
TrainResult train(ToyModel model, const Tensor& dataset, const std::vector<TrainConfig>& schedule);

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log);

void save_checkpoint(const ToyModel& model, const std::filesystem::path& dir);
ToyModel load_checkpoint(const std::filesystem::path& dir);

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_analytic = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-6;

// Central differences over every trainable element. Noise is drawn once and
// replayed for every evaluation.
GradCheckReport gradient_check(const ToyModel& model, const Tensor& images, const TrainConfig& config,
                               double step = 1e-5);

// Model with every parameter moved off its initial value (conv2 nonzero, student
// encoder away from the teacher) so all gradient paths carry signal.
ToyModel perturbed_model(const ToyModel& model, SeededRng& rng, double scale = 0.03);

// Experiment read from a flat key=value config.
struct ToyExperiment {
    ToyModelConfig model;
    SinusoidMixture data;
    std::vector<TrainConfig> schedule;
    std::uint64_t seed = 0;
};

ToyExperiment parse_toy_experiment(const KeyValues& kv);
Tensor make_dataset(const ToyExperiment& experiment);
ToyModel make_model(const ToyExperiment& experiment);

}  // namespace prism
