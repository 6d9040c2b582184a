#include "scalepart/triplane.hpp"

#include <algorithm>
#include <cmath>

#include "scalepart/error.hpp"

namespace scalepart {

TriPlaneField::TriPlaneField(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w) {
  if (h < 2 || w < 2) throw ValidationError("TriPlaneField: planes need at least 2 x 2 cells");
  for (auto& p : planes) p = Tensor::matrix(h * w, c);
}

void TriPlaneField::zero() {
  for (auto& p : planes) p.zero();
}

double grid_position(float coord, std::size_t extent) { return (double(coord) + 1.0) * 0.5 * double(extent - 1); }

namespace {

struct Bilinear {
  std::size_t r0, c0;
  double fr, fc;
};

Bilinear locate(float a, float b, std::size_t height, std::size_t width, bool& clamped) {
  double gr = grid_position(a, height), gc = grid_position(b, width);
  const double maxr = double(height - 1), maxc = double(width - 1);
  if (gr < 0.0 || gr > maxr || gc < 0.0 || gc > maxc || !std::isfinite(gr) || !std::isfinite(gc)) clamped = true;
  gr = std::clamp(std::isfinite(gr) ? gr : 0.0, 0.0, maxr);
  gc = std::clamp(std::isfinite(gc) ? gc : 0.0, 0.0, maxc);
  auto r0 = static_cast<std::size_t>(std::floor(gr));
  auto c0 = static_cast<std::size_t>(std::floor(gc));
  r0 = std::min(r0, height - 2);
  c0 = std::min(c0, width - 2);
  return {r0, c0, gr - double(r0), gc - double(c0)};
}

}  // namespace

Tensor sample_point_features(const TriPlaneField& field, const PointSet& points, SampleDiagnostics* diag) {
  const std::size_t d = field.channels, w = field.width;
  Tensor out = Tensor::matrix(points.size(), d);
  std::vector<double> acc(d);
  std::size_t clamped_count = 0;
  for (std::size_t n = 0; n < points.size(); ++n) {
    std::fill(acc.begin(), acc.end(), 0.0);
    bool clamped = false;
    for (std::size_t p = 0; p < 3; ++p) {
      const auto [ra, ca] = kPlaneAxes[p];
      const Bilinear b = locate(points[n][ra], points[n][ca], field.height, w, clamped);
      const double wts[4] = {(1 - b.fr) * (1 - b.fc), (1 - b.fr) * b.fc, b.fr * (1 - b.fc), b.fr * b.fc};
      const std::size_t cells[4] = {b.r0 * w + b.c0, b.r0 * w + b.c0 + 1, (b.r0 + 1) * w + b.c0,
                                    (b.r0 + 1) * w + b.c0 + 1};
      const Tensor& plane = field.planes[p];
      for (int k = 0; k < 4; ++k) {
        if (wts[k] == 0.0) continue;
        const float* v = plane.data() + cells[k] * d;
        for (std::size_t j = 0; j < d; ++j) acc[j] += wts[k] * v[j];
      }
    }
    if (clamped) ++clamped_count;
    for (std::size_t j = 0; j < d; ++j) out(n, j) = static_cast<float>(acc[j]);
  }
  if (diag) diag->clamped = clamped_count;
  return out;
}

void sample_point_features_backward(const PointSet& points, const Tensor& grad_features, TriPlaneField& grad) {
  const std::size_t d = grad.channels, w = grad.width;
  for (std::size_t n = 0; n < points.size(); ++n) {
    bool clamped = false;
    const float* g = grad_features.data() + n * d;
    for (std::size_t p = 0; p < 3; ++p) {
      const auto [ra, ca] = kPlaneAxes[p];
      const Bilinear b = locate(points[n][ra], points[n][ca], grad.height, w, clamped);
      const double wts[4] = {(1 - b.fr) * (1 - b.fc), (1 - b.fr) * b.fc, b.fr * (1 - b.fc), b.fr * b.fc};
      const std::size_t cells[4] = {b.r0 * w + b.c0, b.r0 * w + b.c0 + 1, (b.r0 + 1) * w + b.c0,
                                    (b.r0 + 1) * w + b.c0 + 1};
      Tensor& plane = grad.planes[p];
      for (int k = 0; k < 4; ++k) {
        if (wts[k] == 0.0) continue;
        float* v = plane.data() + cells[k] * d;
        for (std::size_t j = 0; j < d; ++j) v[j] += static_cast<float>(wts[k] * g[j]);
      }
    }
  }
}

TriPlaneField scatter_mean(const Tensor& lifted, const PointSet& points, std::size_t height, std::size_t width,
                           ScatterIndex* index) {
  if (lifted.rows() != points.size()) throw ValidationError("scatter_mean: one lifted row per point required");
  const std::size_t d = lifted.cols();
  TriPlaneField field(d, height, width);
  ScatterIndex local;
  ScatterIndex& idx = index ? *index : local;
  for (std::size_t p = 0; p < 3; ++p) {
    const auto [ra, ca] = kPlaneAxes[p];
    idx.cells[p].resize(points.size());
    idx.counts[p].assign(height * width, 0);
    std::vector<double> acc(height * width * d, 0.0);
    for (std::size_t n = 0; n < points.size(); ++n) {
      const double gr = std::clamp(grid_position(points[n][ra], height), 0.0, double(height - 1));
      const double gc = std::clamp(grid_position(points[n][ca], width), 0.0, double(width - 1));
      const std::size_t cell = static_cast<std::size_t>(std::lround(gr)) * width + static_cast<std::size_t>(std::lround(gc));
      idx.cells[p][n] = cell;
      ++idx.counts[p][cell];
      const float* v = lifted.data() + n * d;
      double* a = acc.data() + cell * d;
      for (std::size_t j = 0; j < d; ++j) a[j] += v[j];
    }
    Tensor& plane = field.planes[p];
    for (std::size_t cell = 0; cell < height * width; ++cell) {
      const auto count = idx.counts[p][cell];
      if (count == 0) continue;
      for (std::size_t j = 0; j < d; ++j) plane(cell, j) = static_cast<float>(acc[cell * d + j] / double(count));
    }
  }
  return field;
}

Tensor scatter_mean_backward(const TriPlaneField& grad, const ScatterIndex& index) {
  const std::size_t n_points = index.cells[0].size(), d = grad.channels;
  Tensor out = Tensor::matrix(n_points, d);
  for (std::size_t n = 0; n < n_points; ++n) {
    float* o = out.data() + n * d;
    for (std::size_t p = 0; p < 3; ++p) {
      const std::size_t cell = index.cells[p][n];
      const double inv = 1.0 / double(index.counts[p][cell]);
      const float* g = grad.planes[p].data() + cell * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += static_cast<float>(g[j] * inv);
    }
  }
  return out;
}

TriPlaneField mix_planes(const TriPlaneField& s, const Tensor& kernel) {
  const std::size_t d = s.channels, h = s.height, w = s.width;
  if (kernel.size() != 3 * 9 * d) throw ValidationError("mix_planes: kernel must be 3 x 9 x channels");
  TriPlaneField out = s;
  std::vector<double> acc(d);
  for (std::size_t p = 0; p < 3; ++p) {
    const Tensor& in = s.planes[p];
    Tensor& o = out.planes[p];
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const float* self = in.data() + (r * w + c) * d;
        for (std::size_t j = 0; j < d; ++j) acc[j] = self[j];
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const long rr = long(r) + dr, cc = long(c) + dc;
            if (rr < 0 || cc < 0 || rr >= long(h) || cc >= long(w)) continue;
            const float* src = in.data() + (std::size_t(rr) * w + std::size_t(cc)) * d;
            const float* k = kernel.data() + (p * 9 + std::size_t((dr + 1) * 3 + (dc + 1))) * d;
            for (std::size_t j = 0; j < d; ++j) acc[j] += double(k[j]) * src[j];
          }
        }
        float* dst = o.data() + (r * w + c) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] = static_cast<float>(acc[j]);
      }
    }
  }
  return out;
}

TriPlaneField mix_planes_backward(const TriPlaneField& s, const Tensor& kernel, const TriPlaneField& grad_out,
                                  Tensor& grad_kernel) {
  const std::size_t d = s.channels, h = s.height, w = s.width;
  TriPlaneField ds = grad_out;  // residual path
  std::vector<double> gk(kernel.size(), 0.0);
  for (std::size_t p = 0; p < 3; ++p) {
    const Tensor& in = s.planes[p];
    const Tensor& go = grad_out.planes[p];
    Tensor& gi = ds.planes[p];
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const float* g = go.data() + (r * w + c) * d;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const long rr = long(r) + dr, cc = long(c) + dc;
            if (rr < 0 || cc < 0 || rr >= long(h) || cc >= long(w)) continue;
            const std::size_t src_cell = std::size_t(rr) * w + std::size_t(cc);
            const std::size_t tap = p * 9 + std::size_t((dr + 1) * 3 + (dc + 1));
            const float* src = in.data() + src_cell * d;
            const float* k = kernel.data() + tap * d;
            float* gsrc = gi.data() + src_cell * d;
            double* gkt = gk.data() + tap * d;
            for (std::size_t j = 0; j < d; ++j) {
              gkt[j] += double(g[j]) * src[j];
              gsrc[j] += k[j] * g[j];
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < gk.size(); ++i) grad_kernel[i] = static_cast<float>(grad_kernel[i] + gk[i]);
  return ds;
}

}  // namespace scalepart
