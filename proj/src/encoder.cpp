#include "scalepart/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scalepart/error.hpp"
#include "scalepart/optim.hpp"

namespace scalepart {

namespace {

Tensor coords_matrix(const PointSet& points) {
  Tensor x = Tensor::matrix(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    x(i, 0) = points[i].x;
    x(i, 1) = points[i].y;
    x(i, 2) = points[i].z;
  }
  return x;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<nn::ParameterStore>()) {
  if (cfg.feature_dim == 0 || cfg.hidden_dim == 0 || cfg.resolution < 2)
    throw ValidationError("Encoder: invalid configuration");
  Rng rng(seed);
  lift1_ = nn::Linear(*store_, "lift1", 3, cfg.hidden_dim, rng);
  lift2_ = nn::Linear(*store_, "lift2", cfg.hidden_dim, cfg.feature_dim, rng);
  lift3_ = nn::Linear(*store_, "lift3", cfg.feature_dim, cfg.feature_dim, rng);
  Tensor kernel = nn::uniform_init(27, cfg.feature_dim, rng, 0.1f);
  kernel.reshape({3, 9, cfg.feature_dim});
  mix_ = &store_->add("mix.kernel", std::move(kernel));
}

TriPlaneField Encoder::build_triplane(const PointSet& points, Tape* tape) const {
  if (points.empty()) throw ValidationError("Encoder: empty point set");
  Tape local;
  Tape& t = tape ? *tape : local;
  t.points = points;
  t.coords = coords_matrix(points);
  t.pre1 = lift1_.forward(t.coords);
  t.act1 = nn::gelu_forward(t.pre1);
  t.pre2 = lift2_.forward(t.act1);
  t.act2 = nn::gelu_forward(t.pre2);
  t.lifted = lift3_.forward(t.act2);
  t.scattered = scatter_mean(t.lifted, points, cfg_.resolution, cfg_.resolution, &t.index);
  return mix_planes(t.scattered, mix_->value);
}

Tensor Encoder::features(const PointSet& points) const { return sample_point_features(build_triplane(points), points); }

void Encoder::backward(const Tape& tape, const TriPlaneField& grad_field) {
  const TriPlaneField d_scattered = mix_planes_backward(tape.scattered, mix_->value, grad_field, mix_->grad);
  const Tensor d_lifted = scatter_mean_backward(d_scattered, tape.index);
  const Tensor d_act2 = lift3_.backward(tape.act2, d_lifted);
  const Tensor d_pre2 = nn::gelu_backward(tape.pre2, d_act2);
  const Tensor d_act1 = lift2_.backward(tape.act1, d_pre2);
  const Tensor d_pre1 = nn::gelu_backward(tape.pre1, d_act1);
  lift1_.backward(tape.coords, d_pre1, false);
}

double encoder_loss_and_grad(Encoder& encoder, const data::AnnotatedCloud& cloud, const ContrastiveBatch& batch) {
  Encoder::Tape tape;
  const TriPlaneField field = encoder.build_triplane(cloud.points, &tape);
  PointSet anchor_points;
  anchor_points.coords.reserve(batch.anchors.size());
  for (auto a : batch.anchors) anchor_points.coords.push_back(cloud.points[a]);
  const Tensor f = sample_point_features(field, anchor_points);
  if (!f.all_finite()) return std::nan("");
  const ContrastiveResult res = contrastive_loss(f, batch.labels, batch.tau, true);
  if (!std::isfinite(res.loss)) return res.loss;
  TriPlaneField grad(field.channels, field.height, field.width);
  sample_point_features_backward(anchor_points, res.grad, grad);
  encoder.backward(tape, grad);
  return res.loss;
}

EncoderTrainLog train_encoder(Encoder& encoder, const std::vector<data::AnnotatedCloud>& dataset,
                              const EncoderTrainConfig& cfg, const EncoderStepCallback& on_step) {
  if (dataset.empty()) throw ValidationError("train_encoder: empty dataset");
  for (const auto& c : dataset)
    if (c.labels.part_count < 2 || c.labels.size() != c.size())
      throw ValidationError("train_encoder: every cloud needs at least 2 labeled parts");
  nn::AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  EncoderTrainLog log;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& cloud = dataset[order[step]];
      const ContrastiveBatch batch =
          subsample_anchors(cloud.labels, cfg.anchors, mix_seed(mix_seed(cfg.seed, epoch), order[step]), cfg.tau);
      encoder.parameters().zero_grad();
      const double loss = encoder_loss_and_grad(encoder, cloud, batch);
      if (!std::isfinite(loss))
        throw DivergenceError("train_encoder: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                              std::to_string(step));
      nn::adamw_step(encoder.parameters(), opt);
      log.step_loss.push_back(loss);
      epoch_sum += loss;
      if (on_step) on_step(epoch, step, loss);
    }
    log.epoch_loss.push_back(epoch_sum / double(order.size()));
  }
  return log;
}

}  // namespace scalepart
