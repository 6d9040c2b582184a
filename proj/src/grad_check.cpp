#include "scalepart/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace scalepart::nn {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.name << ": max rel err " << e.max_rel_error << " at [" << e.worst_index << "] analytic " << e.analytic
       << " numeric " << e.numeric << " (" << e.checked << " coords)\n";
  }
  return os.str();
}

namespace {

// Neville tableau over central differences with the step shrinking by `kShrink` per row.
template <typename Central>
double ridders(Central& central, double h, std::size_t steps) {
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  steps = std::max<std::size_t>(steps, 2);
  std::vector<std::vector<double>> a(steps, std::vector<double>(steps, 0.0));
  double step = h;
  a[0][0] = central(step);
  double best = a[0][0], err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < steps; ++i) {
    step /= kShrink;
    a[0][i] = central(step);
    double fac = kShrink2;
    for (std::size_t j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

namespace {

GradCheckReport differences(const std::function<double()>& loss, const std::vector<GradTarget>& targets,
                            const GradCheckOptions& opts) {
  GradCheckReport report;
  report.h = opts.h;
  report.tol = opts.tol;
  Rng rng(opts.seed);
  for (const auto& t : targets) {
    GradCheckEntry entry;
    entry.name = t.name;
    std::vector<std::size_t> coords(t.value->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.samples != 0 && opts.samples < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.samples);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const float original = (*t.value)[i];
      // Differences use the steps actually representable in binary32.
      auto shifted = [&](double step, double* taken) {
        (*t.value)[i] = static_cast<float>(original + step);
        *taken = double((*t.value)[i]) - original;
        const double f = loss();
        (*t.value)[i] = original;
        return f;
      };
      auto central = [&](double step) {
        double up = 0.0, down = 0.0;
        const double fu = shifted(step, &up), fd = shifted(-step, &down);
        return (fu - fd) / (up - down);
      };
      double numeric = central(opts.h);
      if (opts.method == GradCheckOptions::Method::Fourth) {
        numeric = (4.0 * numeric - central(2.0 * opts.h)) / 3.0;
      } else if (opts.method == GradCheckOptions::Method::Ridders) {
        numeric = ridders(central, opts.h, opts.ridders_steps);
      }
      const double analytic = (*t.grad)[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > entry.max_rel_error || entry.checked == 0) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
      ++entry.checked;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace

GradCheckReport grad_check(const std::function<double()>& loss, const std::function<double()>& loss_and_grad,
                           const std::vector<GradTarget>& targets, const GradCheckOptions& opts) {
  for (const auto& t : targets) t.grad->zero();
  const double base = loss_and_grad();
  const double again = loss();
  if (base != again) {
    std::ostringstream os;
    os << "grad_check: objective is not deterministic (" << base << " vs " << again << ")";
    throw std::runtime_error(os.str());
  }
  return differences(loss, targets, opts);
}

GradCheckReport grad_check_reference(const std::function<double()>& reference,
                                     const std::function<double()>& loss_and_grad,
                                     const std::vector<GradTarget>& targets, const GradCheckOptions& opts) {
  for (const auto& t : targets) t.grad->zero();
  const double analytic_loss = loss_and_grad();
  const double ref = reference();
  if (reference() != ref) throw std::runtime_error("grad_check_reference: reference is not deterministic");
  GradCheckReport report = differences(reference, targets, opts);
  report.forward_gap = std::abs(analytic_loss - ref) / std::max(1.0, std::abs(ref));
  return report;
}

std::vector<GradTarget> targets_of(ParameterStore& store) {
  std::vector<GradTarget> out;
  for (auto& p : store) out.push_back({p.name, &p.value, &p.grad});
  return out;
}

}  // namespace scalepart::nn
