#include "prism/objectives.hpp"

#include "prism/errors.hpp"

#include <cmath>
#include <fmt/format.h>

namespace prism {

namespace {

// Neumaier-compensated sum of squared differences.
double sum_squared_diff(const Tensor& a, const Tensor& b) {
    double sum = 0.0;
    double carry = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        const double term = d * d;
        const double next = sum + term;
        carry += std::abs(sum) >= term ? (sum - next) + term : (term - next) + sum;
        sum = next;
    }
    return sum + carry;
}

}  // namespace

LossReport LossReport::combine(double l_pix, double l_sem, double lambda_sem, std::size_t k_base) {
    if (!(lambda_sem >= 0.0)) throw ArgumentError("lambda_sem must be >= 0");
    return {l_sem, l_pix, l_pix + lambda_sem * l_sem, lambda_sem, k_base};
}

double semantic_loss(const BandStack& student, const BandStack& teacher, std::size_t k_base) {
    const std::size_t K = student.bands.size();
    if (teacher.bands.size() != K) throw ArgumentError("semantic_loss: stacks have different band counts");
    if (k_base < 1 || k_base > K) {
        throw ArgumentError("semantic_loss: k_base " + std::to_string(k_base) + " outside [1, " + std::to_string(K) + "]");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < k_base; ++k) {
        const Tensor& s = student.bands[k];
        const Tensor& t = teacher.bands[k];
        if (s.shape() != t.shape()) throw ArgumentError("semantic_loss: band shapes differ");
        sum += sum_squared_diff(s, t) / static_cast<double>(s.size());
    }
    return sum / static_cast<double>(k_base);
}

double pixel_loss(const Tensor& recon, const Tensor& target) {
    if (recon.shape() != target.shape()) {
        throw ArgumentError("pixel_loss: shape " + shape_string(recon.shape()) + " vs " + shape_string(target.shape()));
    }
    return sum_squared_diff(recon, target) / static_cast<double>(recon.size());
}

void write_loss_header(std::ostream& out) {
    out << "step,l_pix,l_sem,total\n";
}

void append_loss_row(std::ostream& out, long step, const LossReport& report) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", step, report.l_pix, report.l_sem, report.total);
}

}  // namespace prism
