#include "scalepart/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "scalepart/error.hpp"

namespace scalepart {

std::size_t select_prompt_point(const PartLabelMap& labels, std::uint32_t part, const PointSet& points) {
  if (labels.size() != points.size()) throw ValidationError("select_prompt_point: label count differs from points");
  std::vector<std::size_t> inside, outside;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels.labels[i] == part ? inside : outside).push_back(i);
  if (inside.empty()) throw ValidationError("select_prompt_point: part " + std::to_string(part) + " is empty");
  std::size_t best = inside.front();
  if (outside.empty()) {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (auto i : inside) {
      cx += points[i].x;
      cy += points[i].y;
      cz += points[i].z;
    }
    const double n = double(inside.size());
    const Vec3 c{float(cx / n), float(cy / n), float(cz / n)};
    double best_d = std::numeric_limits<double>::infinity();
    for (auto i : inside) {
      const double d = squared_distance(points[i], c);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
  double best_d = -1.0;
  for (auto i : inside) {
    double nearest = std::numeric_limits<double>::infinity();
    for (auto j : outside) {
      nearest = std::min(nearest, squared_distance(points[i], points[j]));
      if (nearest <= best_d) break;  // cannot beat the current best
    }
    if (nearest > best_d) {
      best_d = nearest;
      best = i;
    }
  }
  return best;
}

double part_scale(const PartLabelMap& labels, std::uint32_t part) {
  if (labels.size() == 0 || part >= labels.part_count) throw ValidationError("part_scale: invalid part");
  std::size_t count = 0;
  for (auto l : labels.labels) count += (l == part);
  return double(count) / double(labels.size());
}

MaskPrediction threshold_probabilities(std::vector<float> probabilities, float threshold) {
  MaskPrediction p;
  p.threshold = threshold;
  p.mask.resize(probabilities.size());
  std::size_t on = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    p.mask[i] = probabilities[i] >= threshold;
    on += p.mask[i];
  }
  p.positive_ratio = probabilities.empty() ? 0.0 : double(on) / double(probabilities.size());
  p.probabilities = std::move(probabilities);
  return p;
}

PreparedShape prepare_shape(const Encoder& encoder, const Decoder& decoder, const PointSet& points) {
  PreparedShape s;
  s.points = points;
  s.features = encoder.features(points);
  s.x0 = decoder.input_features(s.features, points);
  s.anchors = select_anchors(points, decoder.config().anchor_count);
  s.unscaled = decoder.modulate(s.x0, s.anchors, std::nullopt);
  return s;
}

std::vector<float> predict(const Decoder& decoder, const PreparedShape& shape, std::size_t prompt,
                           std::optional<float> scale, bool* scale_clamped) {
  if (prompt >= shape.points.size()) throw ValidationError("invalid prompt index " + std::to_string(prompt));
  bool clamped = false;
  if (scale) scale = clamp_scale(*scale, &clamped);
  if (scale_clamped) *scale_clamped = clamped;
  const Tensor h = scale ? decoder.exchange(decoder.modulate(shape.x0, shape.anchors, scale), prompt)
                         : decoder.exchange(shape.unscaled, prompt);
  const Tensor prob = decoder.head(h);
  return {prob.values().begin(), prob.values().end()};
}

MaskPrediction interactive_segment(const Decoder& decoder, const PreparedShape& shape, const PromptQuery& prompt,
                                   float threshold) {
  bool clamped = false;
  MaskPrediction p = threshold_probabilities(predict(decoder, shape, prompt.index, prompt.scale, &clamped), threshold);
  p.scale_clamped = clamped;
  return p;
}

MaskPrediction interactive_segment(const Encoder& encoder, const Decoder& decoder, const PointSet& points,
                                   const PromptQuery& prompt, float threshold) {
  if (prompt.index >= points.size()) throw ValidationError("invalid prompt index " + std::to_string(prompt.index));
  return interactive_segment(decoder, prepare_shape(encoder, decoder, points), prompt, threshold);
}

std::vector<std::int32_t> resolve_overlaps(const PointSet& points, const std::vector<std::vector<std::uint8_t>>& masks,
                                           const std::vector<std::vector<float>>& confidences, double alpha_conf) {
  const std::size_t n = points.size(), k = masks.size();
  if (k == 0) throw ValidationError("resolve_overlaps: at least one mask required");
  if (confidences.size() != k) throw ValidationError("resolve_overlaps: one confidence vector per mask required");
  for (std::size_t m = 0; m < k; ++m)
    if (masks[m].size() != n || confidences[m].size() != n)
      throw ValidationError("resolve_overlaps: mask size differs from point count");

  std::vector<Vec3> centers(k);
  for (std::size_t m = 0; m < k; ++m) {
    double sx = 0.0, sy = 0.0, sz = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!masks[m][i]) continue;
      sx += points[i].x;
      sy += points[i].y;
      sz += points[i].z;
      ++count;
    }
    if (count) centers[m] = {float(sx / count), float(sy / count), float(sz / count)};
  }

  std::vector<std::int32_t> out(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t covering = 0;
    for (std::size_t m = 0; m < k; ++m) {
      if (!masks[m][i]) continue;
      ++covering;
      const double score =
          alpha_conf * confidences[m][i] + (1.0 - alpha_conf) * std::exp(-distance(points[i], centers[m]));
      if (covering == 1 || score > best) {
        best = score;
        out[i] = static_cast<std::int32_t>(m);
      }
    }
  }
  return out;
}

std::vector<std::int32_t> knn_propagate(std::vector<std::int32_t> assignment, const NeighborGraph& graph,
                                        const PointSet& points, std::size_t iterations, PropagationStats* stats) {
  const std::size_t n = assignment.size();
  if (points.size() != n) throw ValidationError("knn_propagate: assignment size differs from point count");
  if (n > 1 && graph.size() != n) throw ValidationError("knn_propagate: graph built on a different cloud");
  if (std::none_of(assignment.begin(), assignment.end(), [](std::int32_t a) { return a >= 0; }))
    throw ValidationError("knn_propagate: no assigned points");

  PropagationStats local;
  std::map<std::int32_t, std::size_t> votes;
  for (std::size_t round = 0; round < iterations; ++round) {
    ++local.rounds;
    std::vector<std::int32_t> next = assignment;
    bool pending = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment[i] >= 0) continue;
      votes.clear();
      for (auto j : graph.neighbors(i))
        if (assignment[j] >= 0) ++votes[assignment[j]];
      std::int32_t label = -1;
      std::size_t best = 0;
      for (const auto& [l, c] : votes)  // ascending label order keeps the smallest on ties
        if (c > best) {
          best = c;
          label = l;
        }
      next[i] = label;
      pending = pending || label < 0;
      if (label >= 0) ++local.voted;
    }
    assignment = std::move(next);
    if (!pending) break;
  }

  std::vector<std::size_t> assigned;
  for (std::size_t i = 0; i < n; ++i)
    if (assignment[i] >= 0) assigned.push_back(i);
  std::vector<std::int32_t> out = assignment;
  for (std::size_t i = 0; i < n; ++i) {
    if (assignment[i] >= 0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (auto j : assigned) {
      const double d = squared_distance(points[i], points[j]);
      if (d < best) {
        best = d;
        out[i] = assignment[j];
      }
    }
    ++local.fallback_assigned;
  }
  if (stats) *stats = local;
  return out;
}

FullSegResult full_segment_from_predictions(const PointSet& points, const std::vector<MaskPrediction>& predictions,
                                            const FullSegConfig& cfg) {
  if (predictions.empty()) throw ValidationError("full_segment: prompt list is empty");
  const std::size_t n = points.size();
  FullSegResult r;
  for (const auto& p : predictions) {
    if (p.probabilities.size() != n) throw ValidationError("full_segment: prediction size differs from point count");
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = p.probabilities[i] >= cfg.theta;
    r.masks.push_back(std::move(mask));
    r.confidences.push_back(p.probabilities);
  }
  r.resolved = resolve_overlaps(points, r.masks, r.confidences, cfg.alpha_conf);
  std::vector<std::int32_t> final_labels;
  if (std::none_of(r.resolved.begin(), r.resolved.end(), [](std::int32_t a) { return a >= 0; })) {
    r.confidence_fallback = true;
    final_labels.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 1; m < r.confidences.size(); ++m)
        if (r.confidences[m][i] > r.confidences[std::size_t(final_labels[i])][i]) final_labels[i] = std::int32_t(m);
  } else if (n == 1) {
    final_labels = r.resolved;
  } else {
    const NeighborGraph graph = knn(points, std::min(cfg.k, n - 1));
    final_labels = knn_propagate(r.resolved, graph, points);
  }
  r.labels.assign(final_labels.begin(), final_labels.end());
  return r;
}

FullSegResult full_segment(const Decoder& decoder, const PreparedShape& shape, const std::vector<PromptQuery>& prompts,
                           const FullSegConfig& cfg) {
  if (prompts.empty()) throw ValidationError("full_segment: prompt list is empty");
  std::vector<MaskPrediction> preds;
  preds.reserve(prompts.size());
  for (const auto& p : prompts) preds.push_back(interactive_segment(decoder, shape, p, cfg.theta));
  return full_segment_from_predictions(shape.points, preds, cfg);
}

double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, bool* degenerate) {
  if (a.size() != b.size()) throw ValidationError("iou: mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]);
    uni += (a[i] || b[i]);
  }
  if (degenerate) *degenerate = uni == 0;
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

ObjectIoU object_iou(const std::string& id, const PartLabelMap& gt,
                     const std::vector<std::vector<std::uint8_t>>& predicted) {
  if (predicted.size() != gt.part_count) throw ValidationError("object_iou: one prediction per GT part required");
  ObjectIoU o;
  o.id = id;
  std::vector<std::uint8_t> truth(gt.size());
  double total = 0.0;
  for (std::uint32_t k = 0; k < gt.part_count; ++k) {
    for (std::size_t i = 0; i < gt.size(); ++i) truth[i] = gt.labels[i] == k;
    o.parts.push_back(iou(truth, predicted[k]));
    total += o.parts.back();
  }
  o.miou = gt.part_count ? total / double(gt.part_count) : 0.0;
  return o;
}

IoUReport mean_iou(const std::string& protocol, std::vector<ObjectIoU> objects) {
  IoUReport r;
  r.protocol = protocol;
  double total = 0.0;
  for (const auto& o : objects) total += o.miou;
  r.dataset_miou = objects.empty() ? 0.0 : total / double(objects.size());
  r.objects = std::move(objects);
  return r;
}

EvalShape prepare_eval_shape(const Encoder& encoder, const Decoder& decoder, const data::AnnotatedCloud& cloud) {
  if (!cloud.labeled() || cloud.labels.size() != cloud.size())
    throw ValidationError("evaluation requires a labeled cloud");
  EvalShape s;
  s.id = cloud.source_id;
  s.prepared = prepare_shape(encoder, decoder, cloud.points);
  s.labels = cloud.labels;
  for (std::uint32_t k = 0; k < cloud.labels.part_count; ++k) {
    s.prompts.push_back(select_prompt_point(cloud.labels, k, cloud.points));
    s.scales.push_back(static_cast<float>(part_scale(cloud.labels, k)));
  }
  return s;
}

IoUReport evaluate_interactive(const Decoder& decoder, const std::vector<EvalShape>& shapes, bool use_scale,
                               float threshold, double scale_multiplier) {
  std::vector<ObjectIoU> objects;
  for (const auto& s : shapes) {
    std::vector<std::vector<std::uint8_t>> masks;
    for (std::size_t k = 0; k < s.prompts.size(); ++k) {
      PromptQuery q{s.prompts[k], std::nullopt};
      if (use_scale) q.scale = clamp_scale(static_cast<float>(scale_multiplier * s.scales[k]));
      masks.push_back(interactive_segment(decoder, s.prepared, q, threshold).mask);
    }
    objects.push_back(object_iou(s.id, s.labels, masks));
  }
  return mean_iou(use_scale ? "interactive+scale" : "interactive", std::move(objects));
}

IoUReport evaluate_full(const Decoder& decoder, const std::vector<EvalShape>& shapes, bool use_scale,
                        const FullSegConfig& cfg) {
  std::vector<ObjectIoU> objects;
  for (const auto& s : shapes) {
    std::vector<PromptQuery> prompts;
    for (std::size_t k = 0; k < s.prompts.size(); ++k)
      prompts.push_back({s.prompts[k], use_scale ? std::optional<float>(s.scales[k]) : std::nullopt});
    const FullSegResult r = full_segment(decoder, s.prepared, prompts, cfg);
    std::vector<std::vector<std::uint8_t>> masks(prompts.size(), std::vector<std::uint8_t>(r.labels.size()));
    for (std::size_t i = 0; i < r.labels.size(); ++i) masks[r.labels[i]][i] = 1;
    objects.push_back(object_iou(s.id, s.labels, masks));
  }
  return mean_iou(use_scale ? "full+scale/prompted-correspondence" : "full/prompted-correspondence",
                  std::move(objects));
}

std::vector<double> default_sweep_deltas() { return {0.0, -0.1, 0.1, -0.2, 0.2, -0.3, 0.3, -0.5, 0.5, 1.0, 3.0}; }

std::vector<SweepRow> scale_perturbation_sweep(const Decoder& decoder, const std::vector<EvalShape>& shapes,
                                               const std::vector<double>& deltas, float threshold) {
  const double base = evaluate_interactive(decoder, shapes, true, threshold, 1.0).dataset_miou;
  std::vector<SweepRow> rows;
  for (double d : deltas) {
    const double m = d == 0.0 ? base : evaluate_interactive(decoder, shapes, true, threshold, 1.0 + d).dataset_miou;
    rows.push_back({d, m, m - base});
  }
  return rows;
}

}  // namespace scalepart
