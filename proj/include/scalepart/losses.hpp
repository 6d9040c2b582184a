#pragma once

#include <cstdint>
#include <span>

#include "scalepart/tensor.hpp"

namespace scalepart {

inline constexpr double kLossEps = 1e-6;

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dprob, one entry per point
};

// 1 - 2 <p, m> / (|p|_1 + |m|_1 + eps); m is treated as a constant.
LossResult dice_term(std::span<const float> prob, std::span<const std::uint8_t> mask, double eps = kLossEps);

// -(1/N) (beta sum_{m=1} log p + sum_{m=0} log(1 - p)), beta = (1 - pi) / (pi + eps), pi = mean(m).
// Probabilities are clamped to [1e-7, 1 - 1e-7]; the clamp passes gradients through unchanged.
LossResult bce_dyn(std::span<const float> prob, std::span<const std::uint8_t> mask, double eps = kLossEps);
double positive_weight(double pi, double eps = kLossEps);

struct SegLossConfig {
  double lambda_bce = 0.7;
  double lambda_dice = 0.3;
  double eps = kLossEps;
};

struct SegLossResult {
  double loss = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  double pi = 0.0;
  Tensor grad;
};

SegLossResult seg_loss(std::span<const float> prob, std::span<const std::uint8_t> mask, const SegLossConfig& cfg = {});

}  // namespace scalepart
