#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "scalepart/nn.hpp"

namespace scalepart::nn {

// A tensor whose analytic gradient is checked: `value` is perturbed in place, `grad` holds the
// analytic gradient produced by the forward/backward callback.
struct GradTarget {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

struct GradCheckOptions {
  double h = 1e-3;
  double tol = 1e-3;
  // Coordinates sampled per target; 0 checks every coordinate.
  std::size_t samples = 0;
  // Denominator floor of the relative error, |a - n| / max(|a|, |n|, floor).
  double floor = 1e-2;
  std::uint64_t seed = 0;
  // Central: (f(x+h) - f(x-h)) / 2h. Fourth: the fourth-order central stencil on x +- h, x +- 2h.
  // Ridders: central differences at h, h/1.4, h/1.4^2, ... extrapolated to zero step, keeping the
  // estimate with the smallest error estimate, so each coordinate gets a step that balances
  // truncation against binary32 rounding in f.
  enum class Method { Central, Fourth, Ridders };
  Method method = Method::Central;
  std::size_t ridders_steps = 8;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double h = 0.0;
  double tol = 0.0;
  // Reference checks only: |analytic-path loss - reference loss| / max(1, |reference loss|).
  double forward_gap = 0.0;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tol; }
  std::string summary() const;
};

// `loss` evaluates the scalar objective. `loss_and_grad` evaluates it and fills every target's
// `grad` (the checker zeroes them first). Central differences are taken on the sampled
// coordinates. Throws std::runtime_error if two evaluations at the same point disagree.
GradCheckReport grad_check(const std::function<double()>& loss, const std::function<double()>& loss_and_grad,
                           const std::vector<GradTarget>& targets, const GradCheckOptions& opts = {});

// Same comparison, but the central differences are taken on `reference`, an independent binary64
// evaluation of the objective that reads the same (binary32) tensors. This removes the binary32
// rounding noise of the forward pass from the numeric side; `forward_gap` records how closely the
// analytic path's loss agrees with the reference at the unperturbed point.
GradCheckReport grad_check_reference(const std::function<double()>& reference,
                                     const std::function<double()>& loss_and_grad,
                                     const std::vector<GradTarget>& targets, const GradCheckOptions& opts = {});

// Targets for every parameter of a store.
std::vector<GradTarget> targets_of(ParameterStore& store);

}  // namespace scalepart::nn
