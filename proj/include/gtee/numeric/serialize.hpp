#pragma once

// Binary tensor container shared by every checkpoint in the repo:
//   "GTEE" | u32 version=1 | u32 count | count x {
//       u32 name_len | name bytes (UTF-8) | u32 ndim | u64 dims[ndim] | u8 dtype (0=f64) | raw data }
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gtee/numeric/tensor.hpp"

namespace gtee::num {

inline constexpr char kTensorMagic[4] = {'G', 'T', 'E', 'E'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 0;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes);

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

}  // namespace gtee::num
