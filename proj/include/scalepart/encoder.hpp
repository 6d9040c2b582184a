#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "scalepart/contrastive.hpp"
#include "scalepart/mesh.hpp"
#include "scalepart/nn.hpp"
#include "scalepart/triplane.hpp"

namespace scalepart {

struct EncoderConfig {
  std::size_t feature_dim = 96;
  std::size_t hidden_dim = 64;
  std::size_t resolution = 32;  // plane height and width
};

// Per-point lift (3 -> hidden -> D -> D, GELU between layers), scatter-mean onto the three planes,
// then one depthwise 3x3 mixing pass per plane with a residual.
class Encoder {
 public:
  struct Tape {
    PointSet points;
    Tensor coords;  // N x 3
    Tensor pre1, act1, pre2, act2, lifted;
    ScatterIndex index;
    TriPlaneField scattered;
  };

  explicit Encoder(const EncoderConfig& cfg = {}, std::uint64_t seed = 0);

  TriPlaneField build_triplane(const PointSet& points, Tape* tape = nullptr) const;
  // Tri-plane followed by per-point queries at the cloud's own points (N x D).
  Tensor features(const PointSet& points) const;
  // Accumulates parameter gradients given dL/dT for the field produced with `tape`.
  void backward(const Tape& tape, const TriPlaneField& grad_field);

  nn::ParameterStore& parameters() { return *store_; }
  const nn::ParameterStore& parameters() const { return *store_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::unique_ptr<nn::ParameterStore> store_;
  nn::Linear lift1_, lift2_, lift3_;
  nn::Param* mix_ = nullptr;
};

struct EncoderTrainConfig {
  double lr = 1e-5;
  std::size_t epochs = 15;
  float tau = kDefaultTemperature;
  std::size_t anchors = 1000;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
};

struct EncoderTrainLog {
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;
};

// Called after every optimizer step with (epoch, step within epoch, loss).
using EncoderStepCallback = std::function<void(std::size_t, std::size_t, double)>;

// One contrastive step on one instance: returns the loss and accumulates gradients into the
// encoder's parameters (which are not zeroed first).
double encoder_loss_and_grad(Encoder& encoder, const data::AnnotatedCloud& cloud, const ContrastiveBatch& batch);

// One instance per step, visiting the dataset in a seeded shuffled order each epoch.
// A non-finite loss throws DivergenceError before the optimizer runs, so the encoder keeps the
// last good parameters.
EncoderTrainLog train_encoder(Encoder& encoder, const std::vector<data::AnnotatedCloud>& dataset,
                              const EncoderTrainConfig& cfg, const EncoderStepCallback& on_step = {});

}  // namespace scalepart
