#include "prism/pzt.hpp"

#include "prism/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace prism {

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'Z', 'T', '1'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
    return value;
}

std::size_t scalar_bytes(DType dtype) {
    return dtype == DType::F32 ? 4 : 8;
}

}  // namespace

std::vector<std::uint8_t> encode_pzt(const Tensor& t) {
    if (t.rank() > kPztMaxRank) throw ArgumentError("PZT supports at most 8 dimensions");
    std::vector<std::uint8_t> out;
    out.reserve(kPztHeaderBytes + 4 * t.rank() + scalar_bytes(t.dtype()) * t.size());
    for (std::uint8_t b : kMagic) out.push_back(b);
    out.push_back(static_cast<std::uint8_t>(t.dtype()));
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    out.push_back(0);
    out.push_back(0);
    for (std::size_t d : t.shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("dimension exceeds u32");
        put_le(out, static_cast<std::uint32_t>(d));
    }
    if (t.dtype() == DType::F32) {
        for (double v : t.values()) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
        for (double v : t.values()) put_le(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Tensor decode_pzt(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPztHeaderBytes) throw LengthError("PZT header truncated: " + std::to_string(bytes.size()) + " bytes");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("magic", "expected \"PZT1\"");
    const std::uint8_t code = bytes[4];
    if (code != 1 && code != 2) throw FormatError("dtype", "unknown dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const std::size_t ndim = bytes[5];
    if (ndim < 1 || ndim > kPztMaxRank) throw FormatError("ndim", "must be 1-8, got " + std::to_string(ndim));
    if (bytes[6] != 0 || bytes[7] != 0) throw FormatError("padding", "header bytes 6-7 must be zero");

    const std::size_t dims_end = kPztHeaderBytes + 4 * ndim;
    if (bytes.size() < dims_end) {
        throw LengthError("PZT declares " + std::to_string(ndim) + " dims but the file ends inside the dimension table");
    }
    Shape shape(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        shape[i] = get_le<std::uint32_t>(bytes.data() + kPztHeaderBytes + 4 * i);
        if (shape[i] == 0) throw FormatError("dims", "dimension " + std::to_string(i) + " is zero");
    }
    const std::size_t count = element_count(shape);
    const std::size_t width = scalar_bytes(dtype);
    const std::size_t expected = dims_end + count * width;
    if (bytes.size() != expected) {
        throw LengthError("PZT payload has " + std::to_string(bytes.size() - dims_end) + " bytes, shape " +
                          shape_string(shape) + " needs " + std::to_string(count * width));
    }
    std::vector<double> values(count);
    const std::uint8_t* p = bytes.data() + dims_end;
    for (std::size_t i = 0; i < count; ++i, p += width) {
        values[i] = dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)))
                                        : std::bit_cast<double>(get_le<std::uint64_t>(p));
    }
    return Tensor(std::move(shape), std::move(values), dtype);
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    const auto bytes = encode_pzt(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError(path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StorageError(path.string(), "write failed");
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError(path.string(), "cannot open for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw StorageError(path.string(), "read failed");
    return decode_pzt(bytes);
}

}  // namespace prism
