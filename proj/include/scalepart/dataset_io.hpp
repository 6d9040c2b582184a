#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "scalepart/mesh.hpp"

namespace scalepart::data {

// PCPD dataset file, little-endian:
//   "PCPD" | u32 version = 1 | u64 record_count |
//   record_count x ( u32 n | u16 part_count | u8 stage | n x (3 x binary32 xyz, u16 label) )
// part_count == 0 marks an unlabeled cloud (stored labels are ignored on read). A zero-byte
// file decodes as an empty dataset.
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const std::vector<AnnotatedCloud>& clouds);
// Throws FormatError on bad magic, unknown version, truncation, or out-of-range labels.
std::vector<AnnotatedCloud> decode_dataset(const std::vector<std::uint8_t>& bytes);

void dataset_write(const std::vector<AnnotatedCloud>& clouds, const std::filesystem::path& path);
std::vector<AnnotatedCloud> dataset_read(const std::filesystem::path& path);

}  // namespace scalepart::data
