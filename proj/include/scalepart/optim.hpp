#pragma once

#include "scalepart/nn.hpp"

namespace scalepart::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-weight-decay Adam step over every parameter in the store, using Param::grad.
// Increments the store's step count. Throws DivergenceError (naming the parameter) if any
// gradient is non-finite; in that case no parameter is modified.
void adamw_step(ParameterStore& store, const AdamWConfig& cfg);

}  // namespace scalepart::nn
