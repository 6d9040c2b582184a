#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "scalepart/nn.hpp"

namespace scalepart {

// Tensor bundle, little-endian:
//   "S2AM" | u32 version = 1 | u32 count |
//   count x ( u16 name_len | name (UTF-8) | u8 ndim | ndim x u32 dim | binary32 data )
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
// Throws FormatError on bad magic, unknown version, or truncation.
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Parameter values of a store, each name prefixed with `prefix` (e.g. "encoder.").
std::vector<NamedTensor> export_parameters(const nn::ParameterStore& store, std::string_view prefix);
// Copies tensors named prefix + param.name into the store. Throws FormatError if one is missing
// or has the wrong shape.
void import_parameters(nn::ParameterStore& store, const std::vector<NamedTensor>& tensors, std::string_view prefix);

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

}  // namespace scalepart
