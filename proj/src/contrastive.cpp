#include "scalepart/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scalepart/error.hpp"
#include "scalepart/nn.hpp"

namespace scalepart {

ContrastiveBatch subsample_anchors(const PartLabelMap& labels, std::size_t count, std::uint64_t seed, float tau) {
  const std::size_t n = labels.size();
  ContrastiveBatch batch;
  batch.tau = tau;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= n) {
    batch.used_all = count > n;
    batch.anchors = std::move(idx);
  } else {
    // Partial Fisher-Yates: the first `count` slots are a uniform sample without replacement.
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    batch.anchors = std::move(idx);
  }
  batch.labels.reserve(batch.anchors.size());
  for (auto a : batch.anchors) batch.labels.push_back(labels.labels[a]);
  return batch;
}

ContrastiveResult contrastive_loss(const Tensor& features, std::span<const std::uint32_t> labels, float tau,
                                   bool need_grad) {
  const std::size_t n = features.rows(), d = features.cols();
  if (labels.size() != n) throw ValidationError("contrastive_loss: one label per feature row required");
  if (!features.all_finite()) throw ValidationError("contrastive_loss: features must be finite");
  if (!(tau > 0.0f)) throw ValidationError("contrastive_loss: temperature must be positive");

  std::vector<char> valid(n, 0);
  std::size_t valid_count = 0;
  {
    std::vector<std::size_t> per_label;
    for (auto l : labels) {
      if (l >= per_label.size()) per_label.resize(l + 1, 0);
      ++per_label[l];
    }
    for (std::size_t i = 0; i < n; ++i) {
      valid[i] = per_label[labels[i]] > 1;
      valid_count += valid[i];
    }
  }
  if (valid_count == 0) throw ValidationError("contrastive_loss: no positive pairs");

  // Unit rows, kept in binary64 together with the similarity matrix.
  std::vector<double> u(n * d), ut(d * n), radius(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::max(std::sqrt(dot(features.row(i), features.row(i))), 1e-12);
    radius[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      u[i * d + j] = features(i, j) / r;
      ut[j * n + i] = u[i * d + j];
    }
  }
  const double inv_tau = 1.0 / double(tau);
  std::vector<double> sim(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* srow = sim.data() + i * n;
    for (std::size_t k = 0; k < d; ++k) {
      const double a = u[i * d + k] * inv_tau;
      const double* b = ut.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) srow[j] += a * b[j];
    }
  }

  ContrastiveResult result;
  result.valid_anchors = valid_count;
  std::vector<double> dsim;
  if (need_grad) dsim.assign(n * n, 0.0);
  const double inv_count = 1.0 / double(valid_count);
  double total = 0.0;
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const double* srow = sim.data() + i * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, srow[j]);
    double all = 0.0, pos = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        e[j] = 0.0;
        continue;
      }
      e[j] = std::exp(srow[j] - mx);
      all += e[j];
      if (labels[j] == labels[i]) pos += e[j];
    }
    total += std::log(all) - std::log(pos);
    if (need_grad) {
      double* grow = dsim.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double g = e[j] / all;
        if (labels[j] == labels[i]) g -= e[j] / pos;
        grow[j] = g * inv_count * inv_tau;
      }
    }
  }
  result.loss = total * inv_count;
  if (!need_grad) return result;

  // dU = (dS + dS^T) U, then through the row normalisation.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = dsim[i * n + j] + dsim[j * n + i];
      dsim[i * n + j] = s;
      dsim[j * n + i] = s;
    }
  std::vector<double> du(d);
  result.grad = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(du.begin(), du.end(), 0.0);
    const double* grow = dsim.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grow[j];
      if (g == 0.0) continue;
      const double* uj = u.data() + j * d;
      for (std::size_t k = 0; k < d; ++k) du[k] += g * uj[k];
    }
    const double* ui = u.data() + i * d;
    double proj = 0.0;
    for (std::size_t k = 0; k < d; ++k) proj += ui[k] * du[k];
    for (std::size_t k = 0; k < d; ++k) result.grad(i, k) = static_cast<float>((du[k] - ui[k] * proj) / radius[i]);
  }
  return result;
}

}  // namespace scalepart
