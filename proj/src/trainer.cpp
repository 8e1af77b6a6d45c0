#include "prism/trainer.hpp"

#include "prism/errors.hpp"
#include "prism/pzt.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <numeric>

namespace prism {

namespace {

constexpr std::uint64_t kDataStream = 21;
constexpr std::uint64_t kInitStream = 22;

using NoiseSampler = std::function<NoiseOutcome(const BandStack&)>;

std::vector<double> to_vector(const Tensor& t) {
    return {t.values().begin(), t.values().end()};
}

// [B, 3, Hi, Wi] -> [B, T, P] with T = (Hi/p)(Wi/p) tokens and P = 3p^2 laid out (channel, row, col).
void patchify(std::span<const double> images, std::size_t batch, std::size_t hi, std::size_t wi, std::size_t p,
              std::vector<double>& patches) {
    const std::size_t gh = hi / p;
    const std::size_t gw = wi / p;
    const std::size_t pd = 3 * p * p;
    patches.assign(batch * gh * gw * pd, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < hi; ++y) {
                for (std::size_t x = 0; x < wi; ++x) {
                    const std::size_t t = (y / p) * gw + x / p;
                    const std::size_t d = c * p * p + (y % p) * p + x % p;
                    patches[(b * gh * gw + t) * pd + d] = images[((b * 3 + c) * hi + y) * wi + x];
                }
            }
        }
    }
}

void unpatchify(std::span<const double> patches, std::size_t batch, std::size_t hi, std::size_t wi, std::size_t p,
                std::vector<double>& images) {
    const std::size_t gw = wi / p;
    const std::size_t gh = hi / p;
    const std::size_t pd = 3 * p * p;
    images.assign(batch * 3 * hi * wi, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < hi; ++y) {
                for (std::size_t x = 0; x < wi; ++x) {
                    const std::size_t t = (y / p) * gw + x / p;
                    const std::size_t d = c * p * p + (y % p) * p + x % p;
                    images[((b * 3 + c) * hi + y) * wi + x] = patches[(b * gh * gw + t) * pd + d];
                }
            }
        }
    }
}

// z[b, c, t] = sum_d patches[b, t, d] w[d, c] + bias[c]
std::vector<double> encode(std::span<const double> patches, std::size_t batch, std::size_t tokens, std::size_t pd,
                           const Tensor& w, const Tensor& bias) {
    const std::size_t C = bias.size();
    std::vector<double> z(batch * C * tokens);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < tokens; ++t) {
            const double* patch = patches.data() + (b * tokens + t) * pd;
            for (std::size_t c = 0; c < C; ++c) {
                double acc = bias[c];
                for (std::size_t d = 0; d < pd; ++d) acc += patch[d] * w[d * C + c];
                z[(b * C + c) * tokens + t] = acc;
            }
        }
    }
    return z;
}

BandStack make_stack(const std::vector<std::vector<double>>& bands, const Shape& shape, const BandMaskSet& set) {
    BandStack stack;
    stack.mask_set = set;
    for (const auto& b : bands) stack.bands.emplace_back(shape, b);
    stack.final_residual = Tensor(shape);
    return stack;
}

ToyForward forward_core(const ToyModel& model, const Tensor& images, const TrainConfig& config,
                        const NoiseSampler& sample_noise) {
    model.validate();
    config.validate(model.config.bands);
    require_grid(images, "toy forward images");
    const std::size_t p = model.config.patch;
    if (images.dim(1) != 3) throw ArgumentError("toy forward expects RGB images [B,3,H,W]");
    if (images.dim(2) % p != 0 || images.dim(3) % p != 0) {
        throw ArgumentError(fmt::format("image size {}x{} is not divisible by patch {}", images.dim(2), images.dim(3), p));
    }

    ToyForward out;
    ToyCache& cache = out.cache;
    cache.batch = images.dim(0);
    cache.image_h = images.dim(2);
    cache.image_w = images.dim(3);
    cache.grid_h = cache.image_h / p;
    cache.grid_w = cache.image_w / p;
    cache.lambda_sem = config.lambda_sem;
    cache.k_base = config.k_base;
    cache.images = to_vector(images);

    const std::size_t B = cache.batch;
    const std::size_t C = model.config.channels;
    const std::size_t K = model.config.bands;
    const std::size_t T = cache.grid_h * cache.grid_w;
    const std::size_t P = model.patch_dim();
    const Shape grid{B, C, cache.grid_h, cache.grid_w};

    patchify(cache.images, B, cache.image_h, cache.image_w, p, cache.patches);
    const auto z_student = encode(cache.patches, B, T, P, model.enc_w, model.enc_b);
    const auto z_teacher = encode(cache.patches, B, T, P, model.teacher_w, model.teacher_b);

    cache.mask_set = ring_masks(cache.grid_h, cache.grid_w, K, model.config.taper, true);
    const SplitOperator split(cache.mask_set);
    std::vector<double> residual;
    split.split(z_student, cache.student_bands, residual);
    split.split(z_teacher, cache.teacher_bands, residual);

    const BandStack student = make_stack(cache.student_bands, grid, cache.mask_set);
    const BandStack teacher = make_stack(cache.teacher_bands, grid, cache.mask_set);
    cache.noise = sample_noise(student);

    std::vector<std::vector<double>> noised;
    for (const auto& band : cache.noise.stack.bands) noised.push_back(to_vector(band));
    cache.modulator = modulator_forward(model.mod, noised, B, cache.grid_h, cache.grid_w);

    // Decode q[b, c, t] into patches, then back to images.
    std::vector<double> recon_patches(B * T * P);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
            double* dst = recon_patches.data() + (b * T + t) * P;
            for (std::size_t d = 0; d < P; ++d) dst[d] = model.dec_b[d];
            for (std::size_t c = 0; c < C; ++c) {
                const double q = cache.modulator.q[(b * C + c) * T + t];
                for (std::size_t d = 0; d < P; ++d) dst[d] += q * model.dec_w[c * P + d];
            }
        }
    }
    unpatchify(recon_patches, B, cache.image_h, cache.image_w, p, cache.recon);
    out.recon = Tensor(images.shape(), cache.recon);

    const double l_pix = pixel_loss(out.recon, images.as(DType::F64));
    const double l_sem = semantic_loss(student, teacher, config.k_base);
    out.report = LossReport::combine(l_pix, l_sem, config.lambda_sem, config.k_base);
    return out;
}

void require_size(const Tensor& t, const Shape& shape, const char* name) {
    if (t.shape() != shape) {
        throw ArgumentError(fmt::format("toy model {} has shape {}, expected {}", name, shape_string(t.shape()),
                                        shape_string(shape)));
    }
}

}  // namespace

ToyModel ToyModel::init(const ToyModelConfig& config, SeededRng& rng) {
    if (config.patch == 0 || config.channels == 0 || config.bands == 0) {
        throw ArgumentError("toy model needs positive patch, channels and bands");
    }
    ToyModel m;
    m.config = config;
    const std::size_t P = m.patch_dim();
    const std::size_t C = config.channels;
    m.enc_w = gaussian_tensor(rng, {P, C}, 0.0, 1.0, DType::F64);
    m.enc_b = gaussian_tensor(rng, {C}, 0.0, 0.1, DType::F64);
    m.teacher_w = m.enc_w;
    m.teacher_b = m.enc_b;
    m.mod = ModulatorParams::init(config.bands, C, rng, config.kernel, DType::F64);
    m.dec_w = gaussian_tensor(rng, {C, P}, 0.0, 0.1 / std::sqrt(static_cast<double>(C)), DType::F64);
    m.dec_b = Tensor({P});
    return m;
}

void ToyModel::validate() const {
    const std::size_t P = patch_dim();
    const std::size_t C = config.channels;
    require_size(enc_w, {P, C}, "enc_w");
    require_size(enc_b, {C}, "enc_b");
    require_size(teacher_w, {P, C}, "teacher_w");
    require_size(teacher_b, {C}, "teacher_b");
    require_size(dec_w, {C, P}, "dec_w");
    require_size(dec_b, {P}, "dec_b");
    mod.validate();
    if (mod.bands != config.bands || mod.channels != C) throw ArgumentError("toy model: modulator does not match K, C");
}

bool ToyModel::all_finite() const {
    for (const auto& name : trainable_names()) {
        for (double v : trainable(*this, name).values()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

std::vector<std::string> trainable_names() {
    return {"enc_w", "enc_b", "conv1_w", "conv1_b", "conv2_w", "conv2_b", "dec_w", "dec_b"};
}

const Tensor& trainable(const ToyModel& model, const std::string& name) {
    if (name == "enc_w") return model.enc_w;
    if (name == "enc_b") return model.enc_b;
    if (name == "conv1_w") return model.mod.conv1_w;
    if (name == "conv1_b") return model.mod.conv1_b;
    if (name == "conv2_w") return model.mod.conv2_w;
    if (name == "conv2_b") return model.mod.conv2_b;
    if (name == "dec_w") return model.dec_w;
    if (name == "dec_b") return model.dec_b;
    throw ArgumentError("unknown trainable tensor '" + name + "'");
}

void set_trainable(ToyModel& model, const std::string& name, Tensor value) {
    const_cast<Tensor&>(trainable(model, name)) = std::move(value);
}

void TrainConfig::validate(std::size_t bands) const {
    if (stage < 1 || stage > 3) throw ArgumentError("training stage must be 1, 2 or 3");
    if (k_base < 1 || k_base > bands) throw ArgumentError(fmt::format("k_base must lie in [1, {}]", bands));
    if (noise.mode != NoiseMode::Off && stage != 3) throw ArgumentError("noise injection is only allowed in stage 3");
    if (!(lambda_sem >= 0.0)) throw ArgumentError("lambda_sem must be >= 0");
    if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
    if (steps < 0) throw ArgumentError("steps must be >= 0");
}

ToyForward forward(const ToyModel& model, const Tensor& images, const TrainConfig& config, SeededRng& rng) {
    return forward_core(model, images, config,
                        [&](const BandStack& stack) { return inject_noise(stack, config.noise, rng); });
}

ToyForward forward_replay(const ToyModel& model, const Tensor& images, const TrainConfig& config,
                          const NoiseOutcome& frozen) {
    return forward_core(model, images, config, [&](const BandStack& stack) {
        if (frozen.bands != stack.bands.size() || frozen.stack.bands.size() != stack.bands.size() ||
            frozen.stack.bands.front().shape() != stack.bands.front().shape()) {
            throw ArgumentError("forward_replay: frozen noise does not match the band stack");
        }
        NoiseOutcome out = frozen;
        out.stack = stack;
        const std::size_t item = stack.bands.front().size() / frozen.batch;
        for (std::size_t k = 0; k < stack.bands.size(); ++k) {
            auto values = to_vector(stack.bands[k]);
            for (std::size_t b = 0; b < frozen.batch; ++b) {
                if (frozen.kept(b, k)) continue;
                for (std::size_t i = 0; i < item; ++i) values[b * item + i] = frozen.stack.bands[k][b * item + i];
            }
            out.stack.bands[k] = stack.bands[k].with_values(std::move(values));
        }
        return out;
    });
}

const std::vector<double>& ToyGradients::get(const std::string& name) const {
    for (const auto& [n, g] : tensors) {
        if (n == name) return g;
    }
    throw ArgumentError("no gradient for '" + name + "'");
}

ToyGradients backward(const ToyModel& model, const ToyCache& cache, bool encoder_frozen) {
    model.validate();
    const std::size_t p = model.config.patch;
    const std::size_t B = cache.batch;
    const std::size_t C = model.config.channels;
    const std::size_t K = model.config.bands;
    const std::size_t T = cache.grid_h * cache.grid_w;
    const std::size_t P = model.patch_dim();
    if (cache.student_bands.size() != K || cache.modulator.q.size() != B * C * T || cache.patches.size() != B * T * P ||
        cache.recon.size() != cache.images.size() || model.mod.bands != K) {
        throw ArgumentError("backward: cache does not match the model");
    }

    // d l_pix / d recon
    const double n_pix = static_cast<double>(cache.images.size());
    std::vector<double> grad_recon(cache.images.size());
    for (std::size_t i = 0; i < grad_recon.size(); ++i) grad_recon[i] = 2.0 * (cache.recon[i] - cache.images[i]) / n_pix;
    std::vector<double> grad_patches;
    patchify(grad_recon, B, cache.image_h, cache.image_w, p, grad_patches);

    // Decoder.
    std::vector<double> g_dec_w(C * P, 0.0);
    std::vector<double> g_dec_b(P, 0.0);
    std::vector<double> g_q(B * C * T, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
            const double* g = grad_patches.data() + (b * T + t) * P;
            for (std::size_t d = 0; d < P; ++d) g_dec_b[d] += g[d];
            for (std::size_t c = 0; c < C; ++c) {
                const double q = cache.modulator.q[(b * C + c) * T + t];
                double acc = 0.0;
                for (std::size_t d = 0; d < P; ++d) {
                    g_dec_w[c * P + d] += q * g[d];
                    acc += model.dec_w[c * P + d] * g[d];
                }
                g_q[(b * C + c) * T + t] = acc;
            }
        }
    }

    // Modulator, then the noise mask: replaced bands pass no gradient to the encoder.
    ModulatorGrads mg = modulator_backward(model.mod, cache.modulator, g_q);
    const std::size_t item = C * T;
    std::vector<std::vector<double>> g_bands = std::move(mg.bands);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t b = 0; b < B; ++b) {
            if (cache.noise.kept(b, k)) continue;
            std::fill_n(g_bands[k].begin() + static_cast<std::ptrdiff_t>(b * item), item, 0.0);
        }
    }

    // Semantic loss on the clean student bands.
    const double n_band = static_cast<double>(B * item);
    const double sem_scale = cache.lambda_sem * 2.0 / (static_cast<double>(cache.k_base) * n_band);
    for (std::size_t k = 0; k < cache.k_base; ++k) {
        for (std::size_t i = 0; i < g_bands[k].size(); ++i) {
            g_bands[k][i] += sem_scale * (cache.student_bands[k][i] - cache.teacher_bands[k][i]);
        }
    }

    // Split flow adjoint; the final residual is not consumed downstream.
    const SplitOperator split(cache.mask_set);
    std::vector<double> g_z(B * item, 0.0);
    const std::vector<double> zero_residual(B * item, 0.0);
    split.split_adjoint(g_bands, zero_residual, g_z);

    // Encoder.
    std::vector<double> g_enc_w(P * C, 0.0);
    std::vector<double> g_enc_b(C, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
            const double* patch = cache.patches.data() + (b * T + t) * P;
            for (std::size_t c = 0; c < C; ++c) {
                const double g = g_z[(b * C + c) * T + t];
                g_enc_b[c] += g;
                for (std::size_t d = 0; d < P; ++d) g_enc_w[d * C + c] += patch[d] * g;
            }
        }
    }

    ToyGradients grads;
    grads.encoder_used = !encoder_frozen;
    grads.tensors = {{"enc_w", std::move(g_enc_w)},      {"enc_b", std::move(g_enc_b)},
                     {"conv1_w", std::move(mg.conv1_w)}, {"conv1_b", std::move(mg.conv1_b)},
                     {"conv2_w", std::move(mg.conv2_w)}, {"conv2_b", std::move(mg.conv2_b)},
                     {"dec_w", std::move(g_dec_w)},      {"dec_b", std::move(g_dec_b)}};
    return grads;
}

void apply_update(ToyModel& model, const ToyGradients& grads, double learning_rate) {
    for (const auto& [name, g] : grads.tensors) {
        if (!grads.encoder_used && (name == "enc_w" || name == "enc_b")) continue;
        const Tensor& current = trainable(model, name);
        if (g.size() != current.size()) throw ArgumentError("apply_update: gradient size mismatch for " + name);
        std::vector<double> next = to_vector(current);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= learning_rate * g[i];
        set_trainable(model, name, current.with_values(std::move(next)));
    }
}

double reconstruction_loss(const ToyModel& model, const Tensor& dataset) {
    TrainConfig eval;
    eval.k_base = 1;
    SeededRng unused(0);
    return forward(model, dataset, eval, unused).report.l_pix;
}

namespace {

Tensor gather_batch(const Tensor& dataset, std::span<const std::size_t> indices) {
    const std::size_t item = dataset.size() / dataset.dim(0);
    std::vector<double> values(indices.size() * item);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = dataset.values().subspan(indices[i] * item, item);
        std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(i * item));
    }
    Shape shape = dataset.shape();
    shape[0] = indices.size();
    return Tensor(std::move(shape), std::move(values), DType::F64);
}

void shuffle(std::vector<std::size_t>& order, SeededRng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
}

}  // namespace

TrainResult train(ToyModel model, const Tensor& dataset, const std::vector<TrainConfig>& schedule) {
    require_grid(dataset, "training dataset");
    int last_stage = 0;
    for (const auto& cfg : schedule) {
        cfg.validate(model.config.bands);
        if (cfg.stage <= last_stage) throw ArgumentError("training stages must be ascending");
        last_stage = cfg.stage;
    }

    TrainResult result;
    const std::size_t n = dataset.dim(0);
    long global_step = 0;
    for (const auto& cfg : schedule) {
        const auto stage = static_cast<std::uint64_t>(cfg.stage);
        SeededRng batch_rng(derive_seed(cfg.seed, 2 * stage));
        SeededRng noise_rng(derive_seed(cfg.seed, 2 * stage + 1));
        const std::size_t batch = std::min(cfg.batch_size, n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, batch_rng);
        std::size_t pos = 0;

        for (long step = 0; step < cfg.steps; ++step, ++global_step) {
            if (pos + batch > n) {
                shuffle(order, batch_rng);
                pos = 0;
            }
            const Tensor images = gather_batch(dataset, std::span(order).subspan(pos, batch));
            pos += batch;

            const ToyForward fwd = forward(model, images, cfg, noise_rng);
            const LossReport& r = fwd.report;
            if (!std::isfinite(r.total) || !std::isfinite(r.l_pix) || !std::isfinite(r.l_sem)) {
                throw DivergenceError(global_step, "non-finite loss");
            }
            if (step == 0) result.stage_start_sem.push_back(r.l_sem);
            if (step + 1 == cfg.steps) result.stage_end_sem.push_back(r.l_sem);
            result.log.push_back({global_step, cfg.stage, r, fwd.cache.noise.corrupted_count()});

            apply_update(model, backward(model, fwd.cache, cfg.encoder_frozen()), cfg.learning_rate);
            if (!model.all_finite()) throw DivergenceError(global_step, "non-finite parameters after update");
        }
    }
    result.model = std::move(model);
    return result;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log) {
    out << "step,stage,l_pix,l_sem,total,corrupted\n";
    for (const auto& row : log) {
        out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{}\n", row.step, row.stage, row.report.l_pix,
                           row.report.l_sem, row.report.total, row.corrupted);
    }
}

void save_checkpoint(const ToyModel& model, const std::filesystem::path& dir) {
    model.validate();
    std::filesystem::create_directories(dir);
    save_tensor(model.enc_w, dir / "enc_w.pzt");
    save_tensor(model.enc_b, dir / "enc_b.pzt");
    save_tensor(model.teacher_w, dir / "teacher_w.pzt");
    save_tensor(model.teacher_b, dir / "teacher_b.pzt");
    save_tensor(model.dec_w, dir / "dec_w.pzt");
    save_tensor(model.dec_b, dir / "dec_b.pzt");
    save_modulator(model.mod, dir / "modulator");
    KeyValues manifest;
    manifest.set("patch", std::to_string(model.config.patch));
    manifest.set("channels", std::to_string(model.config.channels));
    manifest.set("bands", std::to_string(model.config.bands));
    manifest.set("kernel", std::to_string(model.config.kernel));
    manifest.set("taper", fmt::format("{:.17g}", model.config.taper));
    manifest.write(dir / "manifest.txt");
}

ToyModel load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest = KeyValues::read(dir / "manifest.txt");
    ToyModel m;
    m.config.patch = static_cast<std::size_t>(manifest.get_int("patch"));
    m.config.channels = static_cast<std::size_t>(manifest.get_int("channels"));
    m.config.bands = static_cast<std::size_t>(manifest.get_int("bands"));
    m.config.kernel = static_cast<std::size_t>(manifest.get_int("kernel"));
    m.config.taper = manifest.get_double("taper");
    m.enc_w = load_tensor(dir / "enc_w.pzt");
    m.enc_b = load_tensor(dir / "enc_b.pzt");
    m.teacher_w = load_tensor(dir / "teacher_w.pzt");
    m.teacher_b = load_tensor(dir / "teacher_b.pzt");
    m.dec_w = load_tensor(dir / "dec_w.pzt");
    m.dec_b = load_tensor(dir / "dec_b.pzt");
    m.mod = load_modulator(dir / "modulator");
    m.validate();
    return m;
}

namespace {

// Neumaier-compensated sum of (a - b)(a + b - 2 target) = (a - target)^2 - (b - target)^2.
double sum_square_gap(std::span<const double> a, std::span<const double> b, std::span<const double> target) {
    double sum = 0.0;
    double carry = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double term = (a[i] - b[i]) * ((a[i] - target[i]) + (b[i] - target[i]));
        const double next = sum + term;
        carry += std::abs(sum) >= std::abs(term) ? (sum - next) + term : (term - next) + sum;
        sum = next;
    }
    return sum + carry;
}

// total(plus) - total(minus) formed term by term, so the rounding of each total
// does not swamp the small difference.
double loss_difference(const ToyCache& plus, const ToyCache& minus) {
    double diff = sum_square_gap(plus.recon, minus.recon, plus.images) / static_cast<double>(plus.images.size());
    double sem = 0.0;
    for (std::size_t k = 0; k < plus.k_base; ++k) {
        sem += sum_square_gap(plus.student_bands[k], minus.student_bands[k], plus.teacher_bands[k]) /
               static_cast<double>(plus.student_bands[k].size());
    }
    diff += plus.lambda_sem * sem / static_cast<double>(plus.k_base);
    return diff;
}

}  // namespace

GradCheckReport gradient_check(const ToyModel& model, const Tensor& images, const TrainConfig& config, double step) {
    SeededRng rng(derive_seed(config.seed, 99));
    const ToyForward base = forward(model, images, config, rng);
    const NoiseOutcome frozen = base.cache.noise;
    const ToyGradients analytic = backward(model, base.cache, false);

    GradCheckReport report;
    ToyModel probe = model;
    for (const auto& name : trainable_names()) {
        const Tensor original = trainable(model, name);
        const auto& g = analytic.get(name);
        GradCheckEntry entry{name, original.size(), 0.0, 0.0};
        std::vector<double> values = to_vector(original);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            values[i] = keep + step;
            set_trainable(probe, name, original.with_values(values));
            const ToyForward plus = forward_replay(probe, images, config, frozen);
            values[i] = keep - step;
            set_trainable(probe, name, original.with_values(values));
            const ToyForward minus = forward_replay(probe, images, config, frozen);
            values[i] = keep;

            const double numeric = loss_difference(plus.cache, minus.cache) / (2.0 * step);
            const double denom = std::max({std::abs(g[i]), std::abs(numeric), kGradCheckFloor});
            entry.max_rel_error = std::max(entry.max_rel_error, std::abs(g[i] - numeric) / denom);
            entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(g[i]));
        }
        set_trainable(probe, name, original);
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(entry);
    }
    return report;
}

ToyModel perturbed_model(const ToyModel& model, SeededRng& rng, double scale) {
    ToyModel m = model;
    for (const auto& name : trainable_names()) {
        const Tensor& t = trainable(m, name);
        std::vector<double> values = to_vector(t);
        for (double& v : values) v += rng.gaussian(0.0, scale);
        set_trainable(m, name, t.with_values(std::move(values)));
    }
    return m;
}

namespace {

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "stage",  "steps", "lr",    "batch_size", "lambda_sem", "k_base",   "seed",  "bands",      "taper",
        "noise_mode", "patch", "channels", "kernel", "images", "image_size", "sigma_max"};
    return keys;
}

// Per-stage value: either one entry for every stage or one per stage.
std::string stage_value(const KeyValues& kv, const std::string& key, std::size_t index, std::size_t stages,
                        const std::string& fallback) {
    if (!kv.has(key)) return fallback;
    const auto items = split_list(kv.get(key));
    if (items.size() == 1) return items.front();
    if (items.size() != stages) {
        throw FormatError(key, fmt::format("expected 1 or {} comma-separated values, got {}", stages, items.size()));
    }
    return items[index];
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    KeyValues one;
    one.set(key, text);
    if constexpr (std::is_floating_point_v<T>) {
        return static_cast<T>(one.get_double(key));
    } else {
        const long v = one.get_int(key);
        if (v < 0) throw FormatError(key, "must be non-negative");
        return static_cast<T>(v);
    }
}

}  // namespace

ToyExperiment parse_toy_experiment(const KeyValues& kv) {
    for (const auto& key : kv.keys()) {
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
            throw FormatError(key, "unknown config key");
        }
    }
    ToyExperiment ex;
    ex.seed = kv.has("seed") ? parse_number<std::uint64_t>("seed", kv.get("seed")) : 0;
    if (kv.has("patch")) ex.model.patch = parse_number<std::size_t>("patch", kv.get("patch"));
    if (kv.has("channels")) ex.model.channels = parse_number<std::size_t>("channels", kv.get("channels"));
    if (kv.has("bands")) ex.model.bands = parse_number<std::size_t>("bands", kv.get("bands"));
    if (kv.has("kernel")) ex.model.kernel = parse_number<std::size_t>("kernel", kv.get("kernel"));
    if (kv.has("taper")) ex.model.taper = parse_number<double>("taper", kv.get("taper"));

    ex.data.count = kv.has("images") ? parse_number<std::size_t>("images", kv.get("images")) : 64;
    const std::size_t size = kv.has("image_size") ? parse_number<std::size_t>("image_size", kv.get("image_size")) : 16;
    ex.data.height = size;
    ex.data.width = size;

    const auto stages = split_list(kv.get_or("stage", "1,2,3"));
    if (stages.empty()) throw FormatError("stage", "no stages listed");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        TrainConfig cfg;
        cfg.stage = static_cast<int>(parse_number<long>("stage", stages[i]));
        cfg.seed = ex.seed;
        cfg.steps = parse_number<long>("steps", stage_value(kv, "steps", i, stages.size(), "200"));
        cfg.learning_rate = parse_number<double>("lr", stage_value(kv, "lr", i, stages.size(), "0.04"));
        cfg.batch_size = parse_number<std::size_t>("batch_size", stage_value(kv, "batch_size", i, stages.size(), "16"));
        cfg.lambda_sem = parse_number<double>("lambda_sem", stage_value(kv, "lambda_sem", i, stages.size(), "1.0"));
        cfg.k_base = parse_number<std::size_t>("k_base", stage_value(kv, "k_base", i, stages.size(), "1"));
        cfg.noise.sigma_max = parse_number<double>("sigma_max", stage_value(kv, "sigma_max", i, stages.size(), "1.0"));
        const std::string default_noise = cfg.stage == 3 ? "cutoff" : "off";
        const std::string mode = stage_value(kv, "noise_mode", i, stages.size(), default_noise);
        if (mode == "off") {
            cfg.noise.mode = NoiseMode::Off;
        } else if (mode == "cutoff") {
            cfg.noise.mode = cfg.stage == 3 ? NoiseMode::Cutoff : NoiseMode::Off;
        } else {
            throw FormatError("noise_mode", "must be 'off' or 'cutoff', got '" + mode + "'");
        }
        cfg.validate(ex.model.bands);
        ex.schedule.push_back(cfg);
    }
    return ex;
}

Tensor make_dataset(const ToyExperiment& experiment) {
    SeededRng rng(derive_seed(experiment.seed, kDataStream));
    return sinusoid_mixture_images(experiment.data, rng);
}

ToyModel make_model(const ToyExperiment& experiment) {
    SeededRng rng(derive_seed(experiment.seed, kInitStream));
    return ToyModel::init(experiment.model, rng);
}

}  // namespace prism
