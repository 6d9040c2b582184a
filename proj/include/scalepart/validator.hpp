#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "scalepart/mesh.hpp"
#include "scalepart/nn.hpp"

namespace scalepart::data {

inline constexpr std::size_t kValidatorPoints = 2048;

// Fixed-size (x, y, z, label) matrix: uniform subsampling without replacement when the cloud is
// larger, resampling with replacement when smaller. Deterministic per seed.
Tensor validator_input(const AnnotatedCloud& cloud, std::size_t points, std::uint64_t seed);

// Binary annotation-quality classifier: shared per-point MLP (4 -> 64 -> 128, ReLU), max pool
// over points, head (128 -> 64 -> 1), sigmoid. Output is P(annotation is reasonable).
class ValidatorModel {
 public:
  explicit ValidatorModel(std::uint64_t seed = 0);

  // Logit for a prepared input matrix (points x 4); accumulates parameter gradients scaled by
  // `dlogit` when dlogit != 0.
  double logit(const Tensor& input) const;
  void accumulate_gradient(const Tensor& input, double dlogit);

  double probability(const Tensor& input) const;
  double score(const AnnotatedCloud& cloud, std::uint64_t sample_seed = 0) const;

  nn::ParameterStore& parameters() { return *store_; }
  const nn::ParameterStore& parameters() const { return *store_; }

 private:
  std::unique_ptr<nn::ParameterStore> store_;
  nn::Linear point1_, point2_, head1_, head2_;
};

struct ValidatorConfig {
  std::size_t points = kValidatorPoints;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct TrainedValidator {
  std::unique_ptr<ValidatorModel> model;
  double heldout_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::size_t heldout_count = 0;
  std::vector<double> epoch_loss;
};

// Cross-entropy training on positives (label 1) and negatives (label 0) with a seeded
// per-class held-out split. Throws ValidationError when either class is empty.
TrainedValidator train_validator(const std::vector<AnnotatedCloud>& positives,
                                 const std::vector<AnnotatedCloud>& negatives, const ValidatorConfig& cfg = {});

enum class Corruption {
  Shuffle,  // permute the labels of a random `fraction` of the points among themselves
  Merge,    // relabel one part as another existing part
  Split,    // move one side of a random plane through a part to a fresh label
};

// Synthetic negative built from a clean cloud.
AnnotatedCloud corrupt_labels(const AnnotatedCloud& cloud, Corruption kind, double fraction, std::uint64_t seed);

struct QualityVerdict {
  bool keep = false;
  double score = 0.0;
};

// keep iff validator probability >= threshold.
QualityVerdict quality_filter(const AnnotatedCloud& cloud, const ValidatorModel& model, double threshold = 0.5);

}  // namespace scalepart::data
