#include "oracles.hpp"
#include "prism/errors.hpp"
#include "prism/rng.hpp"
#include "prism/spectral.hpp"
#include "prism/split_flow.hpp"

#include <doctest.h>

#include <cmath>

using namespace prism;

namespace {

Tensor sum_with_residual(const BandStack& s) {
    return recompose(s, true);
}

double relative_l2(const Tensor& a, const Tensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("project_band examples") {
    SeededRng rng(1);
    const Tensor x = gaussian_tensor(rng, {2, 3, 8, 8}, 0.0, 1.0, DType::F64);
    CHECK(max_abs_diff(project_band(x, Tensor::full({8, 8}, 1.0)), x) < 1e-10);
    const Tensor none = project_band(x, Tensor({8, 8}));
    for (double v : none.values()) CHECK(v == 0.0);

    // A binary symmetric mask is idempotent.
    const Tensor radius = normalized_radius(8, 8);
    std::vector<double> binary(64);
    for (std::size_t i = 0; i < 64; ++i) binary[i] = radius[i] < 0.5 ? 1.0 : 0.0;
    const Tensor mask({8, 8}, binary);
    const Tensor once = project_band(x, mask);
    CHECK(max_abs_diff(project_band(once, mask), once) < 1e-9);

    // Matches the direct-DFT projection slice by slice.
    const auto ref = oracle::project(x.values().subspan(64, 64), binary, 8, 8);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(once[64 + i] - ref[i]) < 1e-12);

    CHECK_THROWS_AS(project_band(x, Tensor({8, 7})), ArgumentError);
}

TEST_CASE("asymmetric mask raises a symmetry error") {
    SeededRng rng(2);
    const Tensor x = gaussian_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0, DType::F64);
    std::vector<double> m(64, 0.0);
    m[1] = 1.0;  // bin (0, 1) without its mirror (0, 7)
    CHECK_THROWS_AS(project_band(x, Tensor({8, 8}, m)), SymmetryError);
}

TEST_CASE("iterative_split examples") {
    SeededRng rng(3);
    SUBCASE("K=1 all-pass puts everything in band 0") {
        const Tensor z = gaussian_tensor(rng, {1, 2, 6, 6}, 0.0, 1.0, DType::F64);
        const auto stack = iterative_split(z, ring_masks(6, 6, 1, 0.0, false));
        CHECK(max_abs_diff(stack.bands[0], z) < 1e-12);
        for (double v : stack.final_residual.values()) CHECK(std::abs(v) < 1e-12);
    }
    SUBCASE("telescoping identity for arbitrary masks") {
        const Tensor z = gaussian_tensor(rng, {2, 3, 9, 7}, 0.0, 1.0, DType::F64);
        const auto stack = iterative_split(z, ring_masks(9, 7, 5, 0.03, false));
        CHECK(max_abs_diff(sum_with_residual(stack), z) < 1e-11);
    }
    SUBCASE("constant z keeps its energy in band 0") {
        const Tensor z = Tensor::full({1, 2, 8, 8}, 3.0);
        const auto stack = iterative_split(z, ring_masks(8, 8, 4, 0.04, true));
        CHECK(total_energy(stack.bands[0]) >= 0.999 * total_energy(z));
    }
    SUBCASE("grid mismatch") {
        const Tensor z = gaussian_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0, DType::F64);
        CHECK_THROWS_AS(iterative_split(z, ring_masks(8, 6, 2, 0.0, false)), ArgumentError);
        CHECK_THROWS_AS(iterative_split(Tensor({8, 8}), ring_masks(8, 8, 2, 0.0, false)), ArgumentError);
    }
}

TEST_CASE("split matches the direct-DFT residual split") {
    SeededRng rng(4);
    const Tensor z = gaussian_tensor(rng, {1, 2, 6, 5}, 0.0, 1.0, DType::F64);
    const auto set = ring_masks(6, 5, 3, 0.05, true);
    const auto stack = iterative_split(z, set);
    std::vector<double> residual;
    const auto ref = oracle::split(z.values(), 2, 6, 5, set.projectors, residual);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(stack.bands[k][i] - ref[k][i]) < 1e-12);
    }
}

TEST_CASE("normalized masks leave a negligible residual; each band carries its ring share") {
    SeededRng rng(5);
    const Tensor z = gaussian_tensor(rng, {2, 2, 16, 16}, 0.0, 1.0, DType::F64);
    const auto set = ring_masks(16, 16, 6, 0.04, true);
    const auto stack = iterative_split(z, set);
    CHECK(l2_norm(stack.final_residual) / l2_norm(z) < 1e-4);
    CHECK(relative_l2(recompose(stack, false), z) < 1e-3);
    // Band k's spectrum equals mask_k times the input spectrum.
    const Spectrum sz = dft2(z);
    for (std::size_t k = 0; k < 6; ++k) {
        const Spectrum sb = dft2(stack.bands[k]);
        for (std::size_t i = 0; i < sz.re.size(); ++i) {
            const double m = set.masks[k][i % 256];
            CHECK(std::abs(sb.re[i] - m * sz.re[i]) < 1e-10);
        }
    }
}

TEST_CASE("non-normalized binary-core masks keep bands inside their rings") {
    SeededRng rng(6);
    const Tensor z = gaussian_tensor(rng, {1, 2, 32, 32}, 0.0, 1.0, DType::F64);
    const double taper = 0.03;
    const auto set = ring_masks(32, 32, 4, taper, false);
    const auto stack = iterative_split(z, set);
    const Tensor radius = normalized_radius(32, 32);
    for (std::size_t k = 0; k < 4; ++k) {
        const Spectrum s = dft2(stack.bands[k]);
        double inside = 0.0, outside = 0.0;
        for (std::size_t i = 0; i < s.re.size(); ++i) {
            const double r = radius[i % 1024];
            const double p = s.re[i] * s.re[i] + s.im[i] * s.im[i];
            const bool in_ring = r >= set.edges[k] - taper && r <= set.edges[k + 1] + taper;
            (in_ring ? inside : outside) += p;
        }
        CHECK(outside <= 1e-6 * (inside + outside));
    }
}

TEST_CASE("the split is linear and commutes with batch permutation") {
    SeededRng rng(7);
    const Tensor a = gaussian_tensor(rng, {2, 2, 8, 8}, 0.0, 1.0, DType::F64);
    const Tensor b = gaussian_tensor(rng, {2, 2, 8, 8}, 0.0, 1.0, DType::F64);
    std::vector<double> combo(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) combo[i] = 1.7 * a[i] + b[i];
    const auto set = ring_masks(8, 8, 3, 0.05, true);
    const auto sa = iterative_split(a, set);
    const auto sb = iterative_split(b, set);
    const auto sc = iterative_split(a.with_values(combo), set);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(sc.bands[k][i] - (1.7 * sa.bands[k][i] + sb.bands[k][i])) < 1e-9);
    }
    const std::size_t item = a.size() / 2;
    std::vector<double> swapped(a.values().begin() + item, a.values().end());
    swapped.insert(swapped.end(), a.values().begin(), a.values().begin() + item);
    const auto sp = iterative_split(a.with_values(swapped), set);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < item; ++i) {
            CHECK(sp.bands[k][i] == sa.bands[k][item + i]);
            CHECK(sp.bands[k][item + i] == sa.bands[k][i]);
        }
    }
}

TEST_CASE("f32 split keeps the f32 telescoping tolerance") {
    SeededRng rng(8);
    const Tensor z = gaussian_tensor(rng, {2, 3, 12, 10}, 0.0, 1.0, DType::F32);
    const auto stack = iterative_split(z, ring_masks(12, 10, 4, 0.04, false));
    CHECK(stack.bands[0].dtype() == DType::F32);
    CHECK(max_abs_diff(recompose(stack), z) < 1e-5);
}

TEST_CASE("dropping the residual: blurred images survive band 0 better than sharp ones") {
    SeededRng rng(9);
    const Tensor sharp = gaussian_tensor(rng, {1, 1, 16, 16}, 0.0, 1.0, DType::F64);
    // 3x3 box blur with wraparound.
    std::vector<double> blurred(256);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) s += sharp[((y + 16 + dy) % 16) * 16 + (x + 16 + dx) % 16];
            blurred[y * 16 + x] = s / 9.0;
        }
    const auto set = ring_masks(16, 16, 4, 0.04, true);
    auto base_only_error = [&](const Tensor& z) {
        BandStack s = iterative_split(z, set);
        for (std::size_t k = 1; k < s.bands.size(); ++k) s.bands[k] = Tensor(z.shape());
        return relative_l2(recompose(s, false), z);
    };
    CHECK(base_only_error(sharp.with_values(blurred)) < base_only_error(sharp));
}

TEST_CASE("split_adjoint is the transpose of split") {
    SeededRng rng(10);
    const auto set = ring_masks(6, 8, 3, 0.05, true);
    const SplitOperator op(set);
    const Tensor z = gaussian_tensor(rng, {2, 6, 8}, 0.0, 1.0, DType::F64);
    std::vector<std::vector<double>> bands;
    std::vector<double> residual;
    op.split(z.values(), bands, residual);
    // <split(z), g> == <z, split^T(g)>
    std::vector<std::vector<double>> g(3, std::vector<double>(z.size()));
    std::vector<double> gr(z.size());
    double lhs = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            g[k][i] = rng.gaussian();
            lhs += g[k][i] * bands[k][i];
        }
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
        gr[i] = rng.gaussian();
        lhs += gr[i] * residual[i];
    }
    std::vector<double> gz(z.size());
    op.split_adjoint(g, gr, gz);
    double rhs = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) rhs += z[i] * gz[i];
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
}
