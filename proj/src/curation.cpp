#include "scalepart/curation.hpp"

#include <limits>
#include <set>

#include "scalepart/error.hpp"

namespace scalepart::data {

AnnotatedCloud connectivity_refine(const AnnotatedCloud& cloud, const RefineConfig& cfg) {
  if (!cloud.labeled()) throw ValidationError("connectivity_refine: cloud has no labels");
  AnnotatedCloud out = cloud;
  out.stage = Stage::Refined;
  std::uint32_t next = 0;

  for (std::uint32_t part = 0; part < cloud.labels.part_count; ++part) {
    const auto members = cloud.labels.members(part);
    if (members.empty()) continue;
    std::vector<Vec3> pts;
    pts.reserve(members.size());
    for (auto i : members) pts.push_back(cloud.points[i]);

    const double eps = aabb(pts).diagonal * cfg.eps_factor;
    std::vector<int> cluster(members.size(), 0);
    if (members.size() > 1 && eps > 0.0) cluster = dbscan(pts, eps, cfg.min_pts);

    int clusters = 0;
    for (int c : cluster) clusters = std::max(clusters, c + 1);
    if (clusters == 0) {
      std::fill(cluster.begin(), cluster.end(), 0);  // nothing dense: keep the label whole
      clusters = 1;
    }
    for (std::size_t a = 0; a < members.size(); ++a) {
      if (cluster[a] != kNoise) continue;
      double best = std::numeric_limits<double>::infinity();
      int assign = 0;
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (cluster[b] == kNoise) continue;
        const double d = squared_distance(pts[a], pts[b]);
        if (d < best) {
          best = d;
          assign = cluster[b];
        }
      }
      cluster[a] = -2 - assign;  // resolved later, so noise never seeds other noise
    }
    for (std::size_t a = 0; a < members.size(); ++a) {
      const int c = cluster[a] <= -2 ? -2 - cluster[a] : cluster[a];
      out.labels.labels[members[a]] = next + static_cast<std::uint32_t>(c);
    }
    next += static_cast<std::uint32_t>(clusters);
  }
  out.labels.part_count = next;
  return out;
}

bool part_count_filter(const AnnotatedCloud& cloud, const PartCountBounds& bounds) {
  std::set<std::uint32_t> distinct(cloud.labels.labels.begin(), cloud.labels.labels.end());
  const auto k = distinct.size();
  return k >= bounds.min_parts && k <= bounds.max_parts;
}

std::vector<AnnotatedCloud> curate(const std::vector<AnnotatedCloud>& annotated, const CurationConfig& cfg,
                                   const ValidatorModel* validator, CurationStats* stats) {
  CurationStats local;
  local.input = annotated.size();
  std::vector<AnnotatedCloud> out;
  for (const auto& raw : annotated) {
    if (!raw.labeled() || raw.size() == 0) continue;
    AnnotatedCloud cloud = raw;
    cloud.points = normalize_unit_sphere(raw.points.coords);
    if (validator && !quality_filter(cloud, *validator, cfg.quality_threshold).keep) continue;
    cloud.stage = Stage::Filtered;
    ++local.after_quality;
    const std::uint32_t before = cloud.labels.part_count;
    cloud = connectivity_refine(cloud, cfg.refine);
    local.labels_split += cloud.labels.part_count - std::min(before, cloud.labels.part_count);
    if (!part_count_filter(cloud, cfg.bounds)) continue;
    out.push_back(std::move(cloud));
  }
  local.kept = out.size();
  if (stats) *stats = local;
  return out;
}

}  // namespace scalepart::data
