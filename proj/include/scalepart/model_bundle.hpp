#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "scalepart/checkpoint.hpp"
#include "scalepart/decoder.hpp"
#include "scalepart/encoder.hpp"

namespace scalepart {

// One S2AM bundle holding `encoder.*` and optionally `decoder.*` parameters, plus the
// architecture in `meta.encoder` / `meta.decoder`.
struct SegmentationModel {
  Encoder encoder;
  std::optional<Decoder> decoder;
  std::size_t tensor_count = 0;
};

std::vector<NamedTensor> model_tensors(const Encoder& encoder, const Decoder* decoder);
void save_model(const std::filesystem::path& path, const Encoder& encoder, const Decoder* decoder = nullptr);

// Throws FormatError when a tensor is missing, misshapen, or the metadata is invalid.
SegmentationModel model_from_tensors(const std::vector<NamedTensor>& tensors);
SegmentationModel load_model(const std::filesystem::path& path);

}  // namespace scalepart
