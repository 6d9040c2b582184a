#include "scalepart/losses.hpp"

#include <algorithm>
#include <cmath>

#include "scalepart/error.hpp"
#include "scalepart/nn.hpp"

namespace scalepart {

namespace {

void check_sizes(std::span<const float> prob, std::span<const std::uint8_t> mask, const char* who) {
  if (prob.size() != mask.size()) throw ValidationError(std::string(who) + ": probability and mask sizes differ");
  if (prob.empty()) throw ValidationError(std::string(who) + ": empty input");
}

double clamp_prob(float p) {
  return std::clamp(double(p), double(nn::kProbClamp), 1.0 - double(nn::kProbClamp));
}

}  // namespace

double positive_weight(double pi, double eps) { return (1.0 - pi) / (pi + eps); }

LossResult dice_term(std::span<const float> prob, std::span<const std::uint8_t> mask, double eps) {
  check_sizes(prob, mask, "dice_term");
  double inter = 0.0, psum = 0.0, msum = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    inter += mask[i] ? prob[i] : 0.0;
    psum += prob[i];
    msum += mask[i] ? 1.0 : 0.0;
  }
  const double denom = psum + msum + eps;
  LossResult r;
  r.loss = 1.0 - 2.0 * inter / denom;
  r.grad = Tensor::vector(prob.size());
  // d/dp_i = -2 (m_i denom - inter) / denom^2
  for (std::size_t i = 0; i < prob.size(); ++i)
    r.grad[i] = static_cast<float>(-2.0 * ((mask[i] ? denom : 0.0) - inter) / (denom * denom));
  return r;
}

LossResult bce_dyn(std::span<const float> prob, std::span<const std::uint8_t> mask, double eps) {
  check_sizes(prob, mask, "bce_dyn");
  const double n = double(prob.size());
  double positives = 0.0;
  for (auto m : mask) positives += m ? 1.0 : 0.0;
  const double beta = positive_weight(positives / n, eps);
  double total = 0.0;
  LossResult r;
  r.grad = Tensor::vector(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = clamp_prob(prob[i]);
    if (mask[i]) {
      total += beta * std::log(p);
      r.grad[i] = static_cast<float>(-beta / (p * n));
    } else {
      total += std::log(1.0 - p);
      r.grad[i] = static_cast<float>(1.0 / ((1.0 - p) * n));
    }
  }
  r.loss = -total / n;
  return r;
}

SegLossResult seg_loss(std::span<const float> prob, std::span<const std::uint8_t> mask, const SegLossConfig& cfg) {
  if (cfg.lambda_bce < 0.0 || cfg.lambda_dice < 0.0) throw ValidationError("seg_loss: weights must be non-negative");
  const LossResult b = bce_dyn(prob, mask, cfg.eps);
  const LossResult d = dice_term(prob, mask, cfg.eps);
  SegLossResult r;
  r.bce = b.loss;
  r.dice = d.loss;
  r.loss = cfg.lambda_bce * b.loss + cfg.lambda_dice * d.loss;
  double positives = 0.0;
  for (auto m : mask) positives += m ? 1.0 : 0.0;
  r.pi = positives / double(mask.size());
  r.grad = Tensor::vector(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i)
    r.grad[i] = static_cast<float>(cfg.lambda_bce * b.grad[i] + cfg.lambda_dice * d.grad[i]);
  return r;
}

}  // namespace scalepart
