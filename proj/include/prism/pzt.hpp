#pragma once

#include "prism/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace prism {

// PZT tensor file, little-endian throughout:
//   bytes 0-3  magic "PZT1"
//   byte  4    dtype code (1 = f32, 2 = f64)
//   byte  5    ndim (1-8)
//   bytes 6-7  zero
//   ndim x u32 dimension sizes, then the row-major payload.
inline constexpr std::size_t kPztHeaderBytes = 8;
inline constexpr std::size_t kPztMaxRank = 8;

std::vector<std::uint8_t> encode_pzt(const Tensor& t);
Tensor decode_pzt(std::span<const std::uint8_t> bytes);

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace prism
