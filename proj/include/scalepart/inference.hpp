#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scalepart/decoder.hpp"
#include "scalepart/encoder.hpp"
#include "scalepart/geometry.hpp"
#include "scalepart/mesh.hpp"

namespace scalepart {

inline constexpr float kDefaultThreshold = 0.7f;

// Among the part's points, the one farthest from every point of another part (ties: lowest index).
// With a single part, the point nearest the part centroid. Throws ValidationError for an empty part.
std::size_t select_prompt_point(const PartLabelMap& labels, std::uint32_t part, const PointSet& points);

// |part| / N.
double part_scale(const PartLabelMap& labels, std::uint32_t part);

struct PromptQuery {
  std::size_t index = 0;
  std::optional<float> scale;
};

struct MaskPrediction {
  std::vector<float> probabilities;
  float threshold = kDefaultThreshold;
  std::vector<std::uint8_t> mask;
  double positive_ratio = 0.0;
  bool scale_clamped = false;
};

MaskPrediction threshold_probabilities(std::vector<float> probabilities, float threshold);

// Encoder output and the scale-independent decoder inputs of one cloud. The unscaled modulator
// output is computed once here since it is shared by every prompt without a scale.
struct PreparedShape {
  PointSet points;
  Tensor features;
  Tensor x0;
  std::vector<std::size_t> anchors;
  Tensor unscaled;
};

PreparedShape prepare_shape(const Encoder& encoder, const Decoder& decoder, const PointSet& points);

// Decoder probabilities for one prompt (scale clamped to [0, 1]).
std::vector<float> predict(const Decoder& decoder, const PreparedShape& shape, std::size_t prompt,
                           std::optional<float> scale, bool* scale_clamped = nullptr);

MaskPrediction interactive_segment(const Decoder& decoder, const PreparedShape& shape, const PromptQuery& prompt,
                                   float threshold = kDefaultThreshold);
MaskPrediction interactive_segment(const Encoder& encoder, const Decoder& decoder, const PointSet& points,
                                   const PromptQuery& prompt, float threshold = kDefaultThreshold);

// Per point: the single covering mask; among several, argmax of
// alpha * p_ik + (1 - alpha) * exp(-|x_i - mu_k|) (ties: lower k); uncovered: -1.
std::vector<std::int32_t> resolve_overlaps(const PointSet& points, const std::vector<std::vector<std::uint8_t>>& masks,
                                           const std::vector<std::vector<float>>& confidences, double alpha_conf);

// `iterations` synchronous rounds where each unassigned point takes the majority label of its
// assigned neighbours (ties: smallest label), then every remaining unassigned point copies its
// nearest assigned point (ties: lowest index). Throws ValidationError when nothing is assigned.
struct PropagationStats {
  std::size_t rounds = 0;             // voting rounds actually run
  std::size_t voted = 0;              // points labeled by a vote
  std::size_t fallback_assigned = 0;  // points labeled by the nearest-assigned fallback
};
std::vector<std::int32_t> knn_propagate(std::vector<std::int32_t> assignment, const NeighborGraph& graph,
                                        const PointSet& points, std::size_t iterations = 5,
                                        PropagationStats* stats = nullptr);

struct FullSegConfig {
  float theta = kDefaultThreshold;
  double alpha_conf = 0.5;
  std::size_t k = 8;
};

struct FullSegResult {
  std::vector<std::uint32_t> labels;  // one per point, label k belongs to prompt k
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<std::vector<float>> confidences;
  std::vector<std::int32_t> resolved;  // after overlap resolution, before propagation
  bool confidence_fallback = false;    // no mask covered any point; argmax confidence used instead
};

// Post-processing of candidate predictions into a partition.
FullSegResult full_segment_from_predictions(const PointSet& points, const std::vector<MaskPrediction>& predictions,
                                            const FullSegConfig& cfg = {});
FullSegResult full_segment(const Decoder& decoder, const PreparedShape& shape, const std::vector<PromptQuery>& prompts,
                           const FullSegConfig& cfg = {});

// |A & B| / |A | B|; two empty masks give 1 and set `degenerate`.
double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, bool* degenerate = nullptr);

struct ObjectIoU {
  std::string id;
  double miou = 0.0;
  std::vector<double> parts;
};

struct IoUReport {
  std::string protocol;
  std::vector<ObjectIoU> objects;
  double dataset_miou = 0.0;
};

// Mean over GT parts of IoU(GT part k, predicted[k]).
ObjectIoU object_iou(const std::string& id, const PartLabelMap& gt, const std::vector<std::vector<std::uint8_t>>& predicted);
IoUReport mean_iou(const std::string& protocol, std::vector<ObjectIoU> objects);

// A labeled cloud with its prompts and scales derived by the evaluation protocol.
struct EvalShape {
  std::string id;
  PreparedShape prepared;
  PartLabelMap labels;
  std::vector<std::size_t> prompts;
  std::vector<float> scales;
};

EvalShape prepare_eval_shape(const Encoder& encoder, const Decoder& decoder, const data::AnnotatedCloud& cloud);

// Interactive protocol; with a scale, each prompt uses clamp(multiplier * s_k, 0, 1).
IoUReport evaluate_interactive(const Decoder& decoder, const std::vector<EvalShape>& shapes, bool use_scale,
                               float threshold = kDefaultThreshold, double scale_multiplier = 1.0);
IoUReport evaluate_full(const Decoder& decoder, const std::vector<EvalShape>& shapes, bool use_scale,
                        const FullSegConfig& cfg = {});

struct SweepRow {
  double delta = 0.0;
  double miou = 0.0;
  double delta_iou = 0.0;  // miou(delta) - miou(0)
};

std::vector<double> default_sweep_deltas();
std::vector<SweepRow> scale_perturbation_sweep(const Decoder& decoder, const std::vector<EvalShape>& shapes,
                                               const std::vector<double>& deltas = default_sweep_deltas(),
                                               float threshold = kDefaultThreshold);

}  // namespace scalepart
