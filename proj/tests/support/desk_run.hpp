#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "scalepart/inference.hpp"

namespace scalepart::testing {

// Scaled-down train-and-evaluate experiment on synthetic shapes.
struct DeskRunConfig {
  std::size_t train_shapes = 2000;
  std::size_t eval_shapes = 200;
  std::size_t points = 2048;
  std::uint32_t min_parts = 2;
  std::uint32_t max_parts = 8;
  std::size_t feature_dim = 96;
  std::size_t encoder_epochs = 15;
  double encoder_lr = 1e-5;
  std::size_t decoder_epochs = 40;
  std::uint64_t train_seed = 1;         // shape i uses train_seed + i
  std::uint64_t eval_seed = 10'000'000; // held-out shapes never collide with training seeds
  std::uint64_t seed = 0;               // initialization and data order
};

// Stable text key of every field; cached artifacts are reused only when it matches.
std::string fingerprint(const DeskRunConfig& cfg);

struct DeskRunResult {
  double encoder_seconds = 0.0;
  double decoder_seconds = 0.0;
  double eval_seconds = 0.0;
  bool cached_training = false;
  std::vector<double> encoder_epoch_loss;
  std::vector<double> decoder_epoch_loss;
  double interactive_no_scale = 0.0;
  double interactive_scale = 0.0;
  double full_no_scale = 0.0;
  double full_scale = 0.0;
  std::vector<SweepRow> sweep;
};

// Trains (or reloads from `work_dir` when the fingerprint matches) and evaluates. Writes
// model.s2am, encoder_loss.csv, decoder_loss.csv, timings and results.json into `work_dir`.
DeskRunResult desk_run(const DeskRunConfig& cfg, const std::filesystem::path& work_dir,
                       const std::function<void(const std::string&)>& progress = {});

}  // namespace scalepart::testing
