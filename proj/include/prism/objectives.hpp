#pragma once

#include "prism/split_flow.hpp"
#include "prism/tensor.hpp"

#include <ostream>

namespace prism {

struct LossReport {
    double l_sem = 0.0;
    double l_pix = 0.0;
    double total = 0.0;
    double lambda_sem = 1.0;
    std::size_t k_base = 1;

    static LossReport combine(double l_pix, double l_sem, double lambda_sem, std::size_t k_base);
};

// Mean over the first k_base bands of the element-mean squared difference.
// Bands at index >= k_base never contribute.
double semantic_loss(const BandStack& student, const BandStack& teacher, std::size_t k_base = 1);

// Element-mean squared error.
double pixel_loss(const Tensor& recon, const Tensor& target);

// CSV training log: header "step,l_pix,l_sem,total".
void write_loss_header(std::ostream& out);
void append_loss_row(std::ostream& out, long step, const LossReport& report);

}  // namespace prism
