#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scalepart/geometry.hpp"
#include "scalepart/tensor.hpp"

namespace scalepart {

inline constexpr float kDefaultTemperature = 0.07f;

// Anchor subset of one instance used for a single contrastive step.
struct ContrastiveBatch {
  std::vector<std::size_t> anchors;     // indices into the cloud
  std::vector<std::uint32_t> labels;    // labels restricted to the anchors
  float tau = kDefaultTemperature;
  bool used_all = false;                // requested count exceeded N; every point used
};

// Uniform sampling without replacement, deterministic per seed. Anchors are returned in
// ascending index order.
ContrastiveBatch subsample_anchors(const PartLabelMap& labels, std::size_t count, std::uint64_t seed,
                                   float tau = kDefaultTemperature);

struct ContrastiveResult {
  double loss = 0.0;
  Tensor grad;                // dL/dF, same shape as F (empty when not requested)
  std::size_t valid_anchors = 0;
};

// Supervised intra-instance contrastive loss on cosine similarities s_ij = <f_i, f_j> / (|f_i| |f_j| tau).
// Per anchor: -log(sum_{j in P(i)} e^{s_ij} / sum_{j != i} e^{s_ij}), averaged over anchors whose
// positive set is non-empty. Throws ValidationError when no anchor has a positive.
ContrastiveResult contrastive_loss(const Tensor& features, std::span<const std::uint32_t> labels,
                                   float tau = kDefaultTemperature, bool need_grad = true);

}  // namespace scalepart
