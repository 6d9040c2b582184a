#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "scalepart/decoder.hpp"
#include "scalepart/encoder.hpp"
#include "scalepart/losses.hpp"
#include "scalepart/mesh.hpp"

namespace scalepart {

struct TrainSample {
  std::size_t cloud = 0;
  std::uint32_t part = 0;
  std::vector<std::uint8_t> mask;  // over the full cloud
  std::size_t prompt = 0;
  float scale = 0.0f;              // positive ratio of the part
  bool scale_present = true;
};

// Uniform part choice; the prompt is the part's most interior point and the scale its point share.
TrainSample sample_target_part(const data::AnnotatedCloud& cloud, Rng& rng);

struct DecoderTrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 40;
  std::size_t batch = 8;
  double p_drop = 0.1;
  SegLossConfig loss;
  // Points per sample fed to the decoder (prompt always included); 0 uses the whole cloud.
  std::size_t points_per_sample = 256;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
};

struct DecoderStepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  double pi = 0.0;
};

struct DecoderTrainLog {
  std::vector<DecoderStepRecord> steps;
  std::vector<double> epoch_loss;
};

using DecoderStepCallback = std::function<void(std::size_t epoch, const DecoderStepRecord&)>;

// The decoder input for one sample: a seeded point subset containing the prompt, the frozen
// encoder features computed on the whole cloud and gathered onto the subset, and the subset mask.
struct DecoderExample {
  PointSet points;
  Tensor features;
  std::vector<std::uint8_t> mask;
  std::size_t prompt = 0;
  std::optional<float> scale;
};

DecoderExample make_example(const Encoder& encoder, const data::AnnotatedCloud& cloud, const TrainSample& sample,
                            std::size_t points_per_sample, std::uint64_t seed);

// Forward, seg_loss and backward for one example; parameter gradients are scaled by `weight`.
SegLossResult decoder_loss_and_grad(Decoder& decoder, const DecoderExample& example, const SegLossConfig& cfg,
                                    double weight = 1.0);
// Mean seg_loss without touching gradients.
double decoder_mean_loss(const Decoder& decoder, const std::vector<DecoderExample>& examples, const SegLossConfig& cfg);

// Samples one part per cloud with a fixed seed and no scale dropout (for monitoring).
std::vector<DecoderExample> fixed_examples(const Encoder& encoder, const std::vector<data::AnnotatedCloud>& clouds,
                                           std::size_t points_per_sample, std::uint64_t seed);

// Encoder is read-only. Each epoch visits every cloud once in a seeded order with a fresh part.
// A non-finite loss throws DivergenceError before the optimizer step.
DecoderTrainLog train_decoder(Decoder& decoder, const Encoder& encoder, const std::vector<data::AnnotatedCloud>& dataset,
                              const DecoderTrainConfig& cfg, const DecoderStepCallback& on_step = {});

// CSV with header step,loss,bce,dice,pi.
void write_loss_csv(const std::filesystem::path& path, const DecoderTrainLog& log);

}  // namespace scalepart
