#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "scalepart/geometry.hpp"
#include "scalepart/tensor.hpp"

namespace scalepart {

// Plane order and the coordinate pair each plane is indexed by: (row axis, column axis).
enum class Plane : std::size_t { XY = 0, YZ = 1, ZX = 2 };
inline constexpr std::array<std::array<std::size_t, 2>, 3> kPlaneAxes{{{0, 1}, {1, 2}, {2, 0}}};

// Three axis-aligned feature planes sharing (channels, height, width). Each plane is stored
// channels-last as a (height * width) x channels matrix; cell (r, c) is row r * width + c.
// A coordinate u in [-1, 1] maps to the continuous grid position (u + 1) / 2 * (extent - 1).
struct TriPlaneField {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<Tensor, 3> planes;

  TriPlaneField() = default;
  TriPlaneField(std::size_t channels, std::size_t height, std::size_t width);

  Tensor& plane(Plane p) { return planes[static_cast<std::size_t>(p)]; }
  const Tensor& plane(Plane p) const { return planes[static_cast<std::size_t>(p)]; }
  std::span<const float> cell(Plane p, std::size_t r, std::size_t c) const {
    return plane(p).row(r * width + c);
  }
  void zero();
};

double grid_position(float coord, std::size_t extent);

struct SampleDiagnostics {
  std::size_t clamped = 0;  // queries outside [-1, 1] on some axis, clamped to the boundary
};

// F_n = T_xy(x_n, y_n) + T_yz(y_n, z_n) + T_zx(z_n, x_n), each term bilinearly interpolated.
// Returns N x channels.
Tensor sample_point_features(const TriPlaneField& field, const PointSet& points, SampleDiagnostics* diag = nullptr);
// Adjoint of sample_point_features: accumulates dL/dT into `grad` (same dimensions as the field).
void sample_point_features_backward(const PointSet& points, const Tensor& grad_features, TriPlaneField& grad);

// Nearest-node scatter of per-point vectors into each plane, averaging points that share a cell.
// Empty cells are zero. `cells` (optional) receives each point's cell index per plane.
struct ScatterIndex {
  std::array<std::vector<std::size_t>, 3> cells;
  std::array<std::vector<std::uint32_t>, 3> counts;
};
TriPlaneField scatter_mean(const Tensor& lifted, const PointSet& points, std::size_t height, std::size_t width,
                           ScatterIndex* index = nullptr);
// Adjoint of scatter_mean: returns dL/dlifted (N x channels).
Tensor scatter_mean_backward(const TriPlaneField& grad, const ScatterIndex& index);

// Depthwise 3x3 mixing with a residual, T = S + K * S (zero padding). `kernel` is 3 x 9 x C
// (plane, tap r*3+c, channel).
TriPlaneField mix_planes(const TriPlaneField& s, const Tensor& kernel);
// Returns dL/dS and accumulates dL/dkernel.
TriPlaneField mix_planes_backward(const TriPlaneField& s, const Tensor& kernel, const TriPlaneField& grad_out,
                                  Tensor& grad_kernel);

}  // namespace scalepart
