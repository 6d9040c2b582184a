#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace scalepart {

struct Vec3 {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;

  float operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = double(a.x) - double(b.x);
  const double dy = double(a.y) - double(b.y);
  const double dz = double(a.z) - double(b.z);
  return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Vec3& a, const Vec3& b) { return std::sqrt(squared_distance(a, b)); }

inline double norm(const Vec3& a) {
  return std::sqrt(double(a.x) * a.x + double(a.y) * a.y + double(a.z) * a.z);
}

// N points in R^3. Coordinates are binary32; every derived quantity is computed in binary64.
struct PointSet {
  std::vector<Vec3> coords;

  PointSet() = default;
  explicit PointSet(std::vector<Vec3> c) : coords(std::move(c)) {}

  std::size_t size() const { return coords.size(); }
  bool empty() const { return coords.empty(); }
  const Vec3& operator[](std::size_t i) const { return coords[i]; }
  Vec3& operator[](std::size_t i) { return coords[i]; }
};

// Per-point part indices; every label lies in [0, part_count) and owns at least one point.
struct PartLabelMap {
  std::vector<std::uint32_t> labels;
  std::uint32_t part_count = 0;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> members(std::uint32_t part) const;
  std::vector<std::size_t> part_sizes() const;

  // Builds a map from raw labels, remapping ids to [0, K) in order of first appearance
  // of each distinct value when `compact` is true; otherwise part_count = max + 1.
  static PartLabelMap from_labels(std::vector<std::uint32_t> labels, bool compact = false);
  // Throws ValidationError unless every label is < part_count and every part is non-empty.
  void validate() const;
};

// k nearest neighbours per point (row-major N x k), ascending distance, ties by lower index.
struct NeighborGraph {
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;

  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return {indices.data() + i * k, k};
  }
  std::size_t size() const { return k == 0 ? 0 : indices.size() / k; }
};

struct Aabb {
  Vec3 min;
  Vec3 max;
  double diagonal = 0.0;
};

// Centers at the centroid and scales so the farthest point has norm 1. All-identical input
// maps to the origin. Throws ValidationError on empty or non-finite input.
PointSet normalize_unit_sphere(std::span<const Vec3> coords);

// Exact brute-force Euclidean k-NN without self loops. Throws ValidationError if k == 0 or k >= N.
NeighborGraph knn(const PointSet& points, std::size_t k);

Aabb aabb(std::span<const Vec3> points);
inline Aabb aabb(const PointSet& points) { return aabb(std::span<const Vec3>(points.coords)); }

inline constexpr int kNoise = -1;
inline constexpr std::size_t kDefaultMinPts = 5;

// Density-based clustering with exact neighbourhoods (|p - q| <= eps, the point itself included).
// Seeds are expanded in index order, so cluster ids are ordered by their lowest core point and a
// border point joins the lowest-id cluster that reaches it. Noise is kNoise.
std::vector<int> dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts = kDefaultMinPts);
inline std::vector<int> dbscan(const PointSet& points, double eps, std::size_t min_pts = kDefaultMinPts) {
  return dbscan(std::span<const Vec3>(points.coords), eps, min_pts);
}

}  // namespace scalepart
