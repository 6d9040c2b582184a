#include "scalepart/geometry.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <string>
#include <unordered_map>

#include "scalepart/error.hpp"

namespace scalepart {

std::vector<std::size_t> PartLabelMap::members(std::uint32_t part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == part) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> PartLabelMap::part_sizes() const {
  std::vector<std::size_t> sizes(part_count, 0);
  for (auto l : labels) {
    if (l < part_count) ++sizes[l];
  }
  return sizes;
}

PartLabelMap PartLabelMap::from_labels(std::vector<std::uint32_t> labels, bool compact) {
  PartLabelMap map;
  if (compact) {
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    for (auto& l : labels) {
      auto [it, inserted] = remap.try_emplace(l, static_cast<std::uint32_t>(remap.size()));
      l = it->second;
    }
    map.part_count = static_cast<std::uint32_t>(remap.size());
  } else {
    std::uint32_t max_label = 0;
    for (auto l : labels) max_label = std::max(max_label, l);
    map.part_count = labels.empty() ? 0 : max_label + 1;
  }
  map.labels = std::move(labels);
  return map;
}

void PartLabelMap::validate() const {
  auto sizes = part_sizes();
  for (auto l : labels) {
    if (l >= part_count) {
      throw ValidationError("label " + std::to_string(l) + " outside [0, " + std::to_string(part_count) + ")");
    }
  }
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    if (sizes[p] == 0) throw ValidationError("part " + std::to_string(p) + " owns no points");
  }
}

PointSet normalize_unit_sphere(std::span<const Vec3> coords) {
  if (coords.empty()) throw ValidationError("normalize_unit_sphere: empty point set");
  double cx = 0.0, cy = 0.0, cz = 0.0;
  for (const auto& p : coords) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValidationError("normalize_unit_sphere: non-finite coordinate");
    }
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  const double n = static_cast<double>(coords.size());
  cx /= n;
  cy /= n;
  cz /= n;

  double max_norm = 0.0;
  for (const auto& p : coords) {
    const double dx = p.x - cx, dy = p.y - cy, dz = p.z - cz;
    max_norm = std::max(max_norm, std::sqrt(dx * dx + dy * dy + dz * dz));
  }

  PointSet out;
  out.coords.resize(coords.size());
  if (max_norm == 0.0) return out;  // all points identical
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& p = coords[i];
    out.coords[i] = {static_cast<float>((p.x - cx) / max_norm), static_cast<float>((p.y - cy) / max_norm),
                     static_cast<float>((p.z - cz) / max_norm)};
  }
  return out;
}

NeighborGraph knn(const PointSet& points, std::size_t k) {
  const std::size_t n = points.size();
  if (k == 0) throw ValidationError("knn: k must be positive");
  if (k >= n) throw ValidationError("knn: k must be smaller than the point count");

  NeighborGraph graph;
  graph.k = k;
  graph.indices.resize(n * k);
  std::vector<std::pair<double, std::uint32_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.emplace_back(squared_distance(points[i], points[j]), static_cast<std::uint32_t>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) graph.indices[i * k + r] = cand[r].second;
  }
  return graph;
}

Aabb aabb(std::span<const Vec3> points) {
  if (points.empty()) throw ValidationError("aabb: empty point set");
  Aabb box{points[0], points[0], 0.0};
  for (const auto& p : points) {
    box.min = {std::min(box.min.x, p.x), std::min(box.min.y, p.y), std::min(box.min.z, p.z)};
    box.max = {std::max(box.max.x, p.x), std::max(box.max.y, p.y), std::max(box.max.z, p.z)};
  }
  box.diagonal = distance(box.min, box.max);
  return box;
}

namespace {

void region_query(std::span<const Vec3> points, std::size_t i, double eps2, std::vector<std::size_t>& out) {
  out.clear();
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (squared_distance(points[i], points[j]) <= eps2) out.push_back(j);
  }
}

}  // namespace

std::vector<int> dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw ValidationError("dbscan: eps must be positive");
  if (min_pts == 0) throw ValidationError("dbscan: min_pts must be at least 1");

  constexpr int kUnvisited = std::numeric_limits<int>::min();
  const double eps2 = eps * eps;
  std::vector<int> label(points.size(), kUnvisited);
  std::vector<std::size_t> nbrs;
  std::deque<std::size_t> queue;
  int next_cluster = 0;

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (label[i] != kUnvisited) continue;
    region_query(points, i, eps2, nbrs);
    if (nbrs.size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int cluster = next_cluster++;
    label[i] = cluster;
    queue.assign(nbrs.begin(), nbrs.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = cluster;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      region_query(points, q, eps2, nbrs);
      if (nbrs.size() >= min_pts) {
        for (auto r : nbrs) {
          if (label[r] == kUnvisited || label[r] == kNoise) queue.push_back(r);
        }
      }
    }
  }
  return label;
}

}  // namespace scalepart
