#include "scalepart/optim.hpp"

#include <cmath>
#include <string>

#include "scalepart/error.hpp"

namespace scalepart::nn {

void adamw_step(ParameterStore& store, const AdamWConfig& cfg) {
  for (const auto& p : store) {
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(p.grad[i])) {
        throw DivergenceError("adamw_step: non-finite gradient in '" + p.name + "' at element " + std::to_string(i) +
                              " (step " + std::to_string(store.step_count()) + ")");
      }
    }
  }
  const std::size_t t = store.step_count() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (auto& p : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double m = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
      p.m[i] = static_cast<float>(m);
      p.v[i] = static_cast<float>(v);
      double w = p.value[i];
      w -= cfg.lr * cfg.weight_decay * w;
      w -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      p.value[i] = static_cast<float>(w);
    }
  }
  store.set_step_count(t);
}

}  // namespace scalepart::nn
