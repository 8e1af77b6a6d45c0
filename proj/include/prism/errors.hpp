#pragma once

#include <stdexcept>
#include <string>

namespace prism {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid argument or precondition violation (bad shape, out-of-range parameter).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Filesystem failure while reading or writing.
class StorageError : public Error {
public:
    StorageError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Malformed file header; `field` names the offending header field.
class FormatError : public Error {
public:
    FormatError(std::string field, const std::string& what)
        : Error("format error in field '" + field + "': " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Payload shorter than the header declares.
class LengthError : public Error {
public:
    using Error::Error;
};

// Inverse transform produced an imaginary part above tolerance.
class SymmetryError : public Error {
public:
    SymmetryError(double residue, double tolerance);

    double residue() const noexcept { return residue_; }

private:
    double residue_;
};

// A required input (file, cutoff entry) is missing.
class InputError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(long step, const std::string& what)
        : Error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace prism
