#include "prism/cli.hpp"

#include "prism/analysis.hpp"
#include "prism/band_masks.hpp"
#include "prism/errors.hpp"
#include "prism/pzt.hpp"
#include "prism/split_flow.hpp"
#include "prism/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>

namespace prism::cli {

namespace fs = std::filesystem;

namespace {

// Lifts a rank 2-4 tensor to [B, C, H, W].
Tensor as_grid(const Tensor& t, const std::string& what) {
    switch (t.rank()) {
        case 2: return t.reshaped({1, 1, t.dim(0), t.dim(1)});
        case 3: return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
        case 4: return t;
        default:
            throw ArgumentError(fmt::format("{} must have rank 2, 3 or 4, got shape {}", what, shape_string(t.shape())));
    }
}

std::string band_file_name(std::size_t k) {
    return fmt::format("band_{:02d}.pzt", k);
}

// Writes `text` to `path`, or to `out` when `path` is empty.
void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw StorageError(path, "cannot open for writing");
    file << text;
    if (!file) throw StorageError(path, "write failed");
}

std::vector<double> parse_cutoffs(const std::string& text) {
    std::vector<double> cutoffs;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            cutoffs.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ArgumentError("--cutoffs: '" + item + "' is not a number");
        }
    }
    if (cutoffs.empty()) throw ArgumentError("--cutoffs: empty list");
    return cutoffs;
}

ToyExperiment read_experiment(const std::string& path) {
    return parse_toy_experiment(KeyValues::read(path));
}

struct DecomposeArgs {
    std::string input;
    std::size_t bands = 4;
    double taper = kDefaultTaper;
    bool normalized = false;
    std::string out;
};

void decompose(const DecomposeArgs& a, std::ostream& out) {
    const Tensor z = load_tensor(a.input);
    const Tensor grid = as_grid(z, "--input");
    const auto set = ring_masks(grid.dim(2), grid.dim(3), a.bands, a.taper, a.normalized);
    const BandStack stack = iterative_split(grid, set);
    fs::create_directories(a.out);
    for (std::size_t k = 0; k < stack.band_count(); ++k) {
        save_tensor(stack.bands[k].reshaped(z.shape()), fs::path(a.out) / band_file_name(k));
    }
    save_tensor(stack.final_residual.reshaped(z.shape()), fs::path(a.out) / "residual.pzt");
    const double ratio = l2_norm(z) > 0.0 ? l2_norm(stack.final_residual) / l2_norm(z) : 0.0;
    out << fmt::format("bands={} shape={} residual_ratio={:.6e}\n", stack.band_count(), shape_string(z.shape()), ratio);
}

struct RecomposeArgs {
    std::string in;
    std::string output;
    bool drop_residual = false;
};

void recompose_cmd(const RecomposeArgs& a, std::ostream& out) {
    BandStack stack;
    for (std::size_t k = 0;; ++k) {
        const fs::path path = fs::path(a.in) / band_file_name(k);
        if (!fs::exists(path)) break;
        stack.bands.push_back(load_tensor(path));
    }
    if (stack.bands.empty()) throw InputError("no " + band_file_name(0) + " in " + a.in);
    if (!a.drop_residual) stack.final_residual = load_tensor(fs::path(a.in) / "residual.pzt");
    const Tensor z = recompose(stack, !a.drop_residual);
    save_tensor(z, a.output);
    out << fmt::format("bands={} residual={} shape={}\n", stack.band_count(), a.drop_residual ? "dropped" : "included",
                       shape_string(z.shape()));
}

struct EnergyArgs {
    std::string input;
    std::size_t bands = 4;
    double taper = kDefaultTaper;
    std::string csv;
};

void energy(const EnergyArgs& a, std::ostream& out) {
    const Tensor features = as_grid(load_tensor(a.input), "--input");
    const auto set = ring_masks(features.dim(2), features.dim(3), a.bands, a.taper, true);
    const EnergyProfile profile = energy_profile(features, set);
    std::string text = "band_index,edge_lo,edge_hi,energy_fraction\n";
    for (std::size_t k = 0; k < profile.bands; ++k) {
        text += fmt::format("{},{:.6f},{:.6f},{:.12f}\n", k, profile.edges[k], profile.edges[k + 1], profile.e[k]);
    }
    emit(text, a.csv, out);
}

struct FilterArgs {
    std::string input;
    std::string mode = "lp";
    double cutoff = 0.5;
    double taper = kDefaultTaper;
    std::string output;
};

void filter(const FilterArgs& a, std::ostream& out) {
    const FilterMode mode = parse_filter_mode(a.mode);
    const Tensor image = read_ppm(a.input);
    write_ppm(filter_image(image, mode, a.cutoff, a.taper), a.output);
    out << fmt::format("mode={} cutoff={:.4f} size={}x{}\n", filter_mode_name(mode), a.cutoff, image.dim(2),
                       image.dim(1));
}

struct RetrievalArgs {
    std::string text;
    bool synthetic = false;
    std::string image_dir;
    std::size_t n = 500;
    std::string mode = "lp";
    std::string cutoffs = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
    std::size_t k = 5;
    std::string csv;
    std::uint64_t seed = 0;
};

void retrieval(const RetrievalArgs& a, std::ostream& out) {
    const FilterMode mode = parse_filter_mode(a.mode);
    const auto cutoffs = parse_cutoffs(a.cutoffs);
    std::unique_ptr<EmbeddingSource> source;
    if (a.synthetic) {
        SyntheticEncoderSource::Options options;
        options.count = a.n;
        options.seed = a.seed;
        source = std::make_unique<SyntheticEncoderSource>(options);
    } else {
        if (a.text.empty() || a.image_dir.empty()) throw ArgumentError("retrieval needs --synthetic or --text with --image-dir");
        source = std::make_unique<PztEmbeddingSource>(a.text, a.image_dir);
    }
    const RetrievalCurve curve = retrieval_sweep(*source, cutoffs, mode, a.k);
    std::string text = "cutoff,mode,recall_at_k\n";
    for (std::size_t i = 0; i < curve.cutoffs.size(); ++i) {
        text += fmt::format("{:.2f},{},{:.6f}\n", curve.cutoffs[i], filter_mode_name(mode), curve.recall_at_k[i]);
    }
    emit(text, a.csv, out);
}

struct TrainArgs {
    std::string config;
    std::string out_dir;
};

void train_toy(const TrainArgs& a, std::ostream& out) {
    const ToyExperiment ex = read_experiment(a.config);
    const Tensor data = make_dataset(ex);
    const ToyModel model = make_model(ex);
    const double initial = reconstruction_loss(model, data);
    const TrainResult result = train(model, data, ex.schedule);
    const double final_loss = reconstruction_loss(result.model, data);

    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    save_checkpoint(result.model, dir / "checkpoint");
    std::ofstream log(dir / "train_log.csv", std::ios::binary | std::ios::trunc);
    if (!log) throw StorageError((dir / "train_log.csv").string(), "cannot open for writing");
    write_train_log(log, result.log);

    std::string summary = fmt::format("initial_pixel_loss={:.17g}\nfinal_pixel_loss={:.17g}\n", initial, final_loss);
    for (std::size_t i = 0; i < ex.schedule.size(); ++i) {
        summary += fmt::format("stage{}_l_sem={:.17g},{:.17g}\n", ex.schedule[i].stage, result.stage_start_sem[i],
                               result.stage_end_sem[i]);
    }
    emit(summary, (dir / "summary.txt").string(), out);
    out << summary;
}

struct GradcheckArgs {
    std::string config;
    double tolerance = 1e-5;
};

// Returns true when every stage passes.
bool gradcheck(const GradcheckArgs& a, std::ostream& out) {
    ToyExperiment ex = read_experiment(a.config);
    ex.data.count = 2;
    const Tensor images = make_dataset(ex);
    SeededRng rng(derive_seed(ex.seed, 7));
    const ToyModel model = perturbed_model(make_model(ex), rng);
    out << "stage,tensor,count,max_rel_error\n";
    double worst = 0.0;
    for (const auto& cfg : ex.schedule) {
        const GradCheckReport report = gradient_check(model, images, cfg);
        for (const auto& e : report.entries) {
            out << fmt::format("{},{},{},{:.3e}\n", cfg.stage, e.name, e.count, e.max_rel_error);
        }
        worst = std::max(worst, report.max_rel_error);
    }
    const bool ok = worst < a.tolerance;
    out << fmt::format("max_rel_error={:.3e} tolerance={:.1e} {}\n", worst, a.tolerance, ok ? "PASS" : "FAIL");
    return ok;
}

struct MasksArgs {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t bands = 4;
    double taper = kDefaultTaper;
    bool normalized = false;
    std::string out;
};

void masks(const MasksArgs& a, std::ostream& out) {
    const auto set = ring_masks(a.height, a.width, a.bands, a.taper, a.normalized);
    save_tensor(set.stacked(), a.out);
    out << fmt::format("masks={}x{}x{} normalized={}\n", a.bands, a.height, a.width, a.normalized ? "yes" : "no");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Frequency-band latent factorization toolkit", "prism"};
    app.require_subcommand(1);

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Split a latent grid into ring bands plus residual");
    c_dec->add_option("--input", dec.input, "Input tensor (PZT, rank 2-4)")->required();
    c_dec->add_option("--bands", dec.bands, "Band count K")->capture_default_str();
    c_dec->add_option("--taper", dec.taper, "Raised-cosine half-width")->capture_default_str();
    c_dec->add_flag("--normalized", dec.normalized, "Normalize masks to a partition of unity");
    c_dec->add_option("--out", dec.out, "Output directory")->required();

    RecomposeArgs rec;
    auto* c_rec = app.add_subcommand("recompose", "Sum band files (and residual) back into one tensor");
    c_rec->add_option("--in", rec.in, "Directory written by decompose")->required();
    c_rec->add_option("--output", rec.output, "Output tensor (PZT)")->required();
    c_rec->add_flag("--drop-residual", rec.drop_residual, "Leave out residual.pzt");

    EnergyArgs en;
    auto* c_en = app.add_subcommand("energy", "Normalized spectral energy per band (CSV)");
    c_en->add_option("--input", en.input, "Feature tensor (PZT, rank 2-4)")->required();
    c_en->add_option("--bands", en.bands, "Band count K")->capture_default_str();
    c_en->add_option("--taper", en.taper, "Raised-cosine half-width")->capture_default_str();
    c_en->add_option("--csv", en.csv, "CSV output path (default stdout)");

    FilterArgs fi;
    auto* c_fi = app.add_subcommand("filter", "Low- or high-pass filter a PPM image");
    c_fi->add_option("--input", fi.input, "Input image (binary PPM)")->required();
    c_fi->add_option("--mode", fi.mode, "lp or hp")->capture_default_str();
    c_fi->add_option("--cutoff", fi.cutoff, "Normalized radius cutoff in (0, 1]")->required();
    c_fi->add_option("--taper", fi.taper, "Raised-cosine half-width")->capture_default_str();
    c_fi->add_option("--output", fi.output, "Output image (binary PPM)")->required();

    RetrievalArgs re;
    auto* c_re = app.add_subcommand("retrieval", "Recall@k of text-image retrieval under filtering (CSV)");
    auto* o_text = c_re->add_option("--text", re.text, "Text embeddings (PZT [N, D])");
    auto* o_syn = c_re->add_flag("--synthetic", re.synthetic, "Use the built-in synthetic encoder");
    auto* o_dir = c_re->add_option("--image-dir", re.image_dir, "Directory of image_<mode>_<cutoff>.pzt files");
    auto* o_n = c_re->add_option("--n", re.n, "Synthetic item count")->capture_default_str();
    c_re->add_option("--mode", re.mode, "lp or hp")->capture_default_str();
    c_re->add_option("--cutoffs", re.cutoffs, "Comma-separated cutoffs")->capture_default_str();
    c_re->add_option("--k", re.k, "Rank threshold")->capture_default_str();
    c_re->add_option("--csv", re.csv, "CSV output path (default stdout)");
    c_re->add_option("--seed", re.seed, "Synthetic seed")->capture_default_str();
    o_text->excludes(o_syn);
    o_dir->excludes(o_syn);
    o_n->excludes(o_text);
    o_text->needs(o_dir);
    o_dir->needs(o_text);

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train-toy", "Train the toy autoencoder through the staged schedule");
    c_tr->add_option("--config", tr.config, "key=value config file")->required();
    c_tr->add_option("--out-dir", tr.out_dir, "Output directory")->required();

    GradcheckArgs gc;
    auto* c_gc = app.add_subcommand("gradcheck", "Compare toy-model gradients against central differences");
    c_gc->add_option("--config", gc.config, "key=value config file")->required();
    c_gc->add_option("--tolerance", gc.tolerance, "Largest allowed relative error")->capture_default_str();

    MasksArgs ma;
    auto* c_ma = app.add_subcommand("masks", "Export ring masks as a [K, H, W] PZT");
    c_ma->add_option("--height", ma.height, "Grid height")->required();
    c_ma->add_option("--width", ma.width, "Grid width")->required();
    c_ma->add_option("--bands", ma.bands, "Band count K")->capture_default_str();
    c_ma->add_option("--taper", ma.taper, "Raised-cosine half-width")->capture_default_str();
    c_ma->add_flag("--normalized", ma.normalized, "Normalize masks to a partition of unity");
    c_ma->add_option("--out", ma.out, "Output tensor (PZT)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto used = app.get_subcommands();
        err << (used.empty() ? app.help() : used.front()->help());
        return kExitUsage;
    }

    try {
        if (*c_dec) decompose(dec, out);
        if (*c_rec) recompose_cmd(rec, out);
        if (*c_en) energy(en, out);
        if (*c_fi) filter(fi, out);
        if (*c_re) retrieval(re, out);
        if (*c_tr) train_toy(tr, out);
        if (*c_gc && !gradcheck(gc, out)) return kExitNumeric;
        if (*c_ma) masks(ma, out);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace prism::cli
