#include "prism/errors.hpp"

#include <cstdio>

namespace prism {

namespace {

std::string symmetry_message(double residue, double tolerance) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "imaginary residue %.3e exceeds tolerance %.3e (non-Hermitian spectrum)",
                  residue, tolerance);
    return buf;
}

}  // namespace

SymmetryError::SymmetryError(double residue, double tolerance)
    : Error(symmetry_message(residue, tolerance)), residue_(residue) {}

}  // namespace prism
