#include "scalepart/model_bundle.hpp"

#include <cmath>

#include "scalepart/error.hpp"

namespace scalepart {

namespace {

constexpr const char* kEncoderPrefix = "encoder.";
constexpr const char* kDecoderPrefix = "decoder.";
constexpr const char* kEncoderMeta = "meta.encoder";
constexpr const char* kDecoderMeta = "meta.decoder";

Tensor meta_tensor(const std::vector<std::size_t>& values) {
  Tensor t = Tensor::vector(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<float>(values[i]);
  return t;
}

std::vector<std::size_t> read_meta(const Tensor& t, std::size_t expected, const char* name) {
  if (t.size() != expected) throw FormatError(std::string(name) + ": unexpected length");
  std::vector<std::size_t> v;
  for (float f : t.values()) {
    if (!(f >= 0.0f) || f != std::floor(f) || f > 1e7f) throw FormatError(std::string(name) + ": invalid value");
    v.push_back(static_cast<std::size_t>(f));
  }
  return v;
}

}  // namespace

std::vector<NamedTensor> model_tensors(const Encoder& encoder, const Decoder* decoder) {
  const auto& ec = encoder.config();
  std::vector<NamedTensor> out;
  out.push_back({kEncoderMeta, meta_tensor({ec.feature_dim, ec.hidden_dim, ec.resolution})});
  auto enc = export_parameters(encoder.parameters(), kEncoderPrefix);
  out.insert(out.end(), enc.begin(), enc.end());
  if (decoder) {
    const auto& dc = decoder->config();
    out.push_back({kDecoderMeta, meta_tensor({dc.dim, dc.heads, dc.ffn_hidden, dc.scale_pairs, dc.modulator_layers,
                                              dc.cross_layers, dc.anchor_count})});
    auto dec = export_parameters(decoder->parameters(), kDecoderPrefix);
    out.insert(out.end(), dec.begin(), dec.end());
  }
  return out;
}

void save_model(const std::filesystem::path& path, const Encoder& encoder, const Decoder* decoder) {
  write_checkpoint(path, model_tensors(encoder, decoder));
}

SegmentationModel model_from_tensors(const std::vector<NamedTensor>& tensors) {
  EncoderConfig ec;
  if (const auto* m = find_tensor(tensors, kEncoderMeta)) {
    const auto v = read_meta(m->tensor, 3, kEncoderMeta);
    ec.feature_dim = v[0];
    ec.hidden_dim = v[1];
    ec.resolution = v[2];
  }
  SegmentationModel model{[&] {
    try {
      return Encoder(ec);
    } catch (const ValidationError& e) {
      throw FormatError(std::string("invalid encoder metadata: ") + e.what());
    }
  }(), std::nullopt, 0};
  import_parameters(model.encoder.parameters(), tensors, kEncoderPrefix);
  bool has_decoder = find_tensor(tensors, kDecoderMeta) != nullptr;
  for (const auto& t : tensors) has_decoder = has_decoder || t.name.rfind(kDecoderPrefix, 0) == 0;
  if (has_decoder) {
    DecoderConfig dc;
    if (const auto* m = find_tensor(tensors, kDecoderMeta)) {
      const auto v = read_meta(m->tensor, 7, kDecoderMeta);
      dc.dim = v[0];
      dc.heads = v[1];
      dc.ffn_hidden = v[2];
      dc.scale_pairs = v[3];
      dc.modulator_layers = v[4];
      dc.cross_layers = v[5];
      dc.anchor_count = v[6];
    }
    try {
      model.decoder.emplace(dc);
    } catch (const ValidationError& e) {
      throw FormatError(std::string("invalid decoder metadata: ") + e.what());
    }
    import_parameters(model.decoder->parameters(), tensors, kDecoderPrefix);
    if (dc.dim != ec.feature_dim) throw FormatError("encoder and decoder dimensions differ");
  }
  model.tensor_count = tensors.size();
  return model;
}

SegmentationModel load_model(const std::filesystem::path& path) { return model_from_tensors(read_checkpoint(path)); }

}  // namespace scalepart
