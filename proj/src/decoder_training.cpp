#include "scalepart/decoder_training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "scalepart/error.hpp"
#include "scalepart/inference.hpp"
#include "scalepart/optim.hpp"

namespace scalepart {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TrainSample sample_target_part(const data::AnnotatedCloud& cloud, Rng& rng) {
  if (cloud.labels.part_count < 2 || cloud.labels.size() != cloud.size())
    throw ValidationError("sample_target_part: cloud needs at least 2 labeled parts");
  std::uniform_int_distribution<std::uint32_t> pick(0, cloud.labels.part_count - 1);
  TrainSample s;
  s.part = pick(rng);
  s.mask.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) s.mask[i] = cloud.labels.labels[i] == s.part;
  s.prompt = select_prompt_point(cloud.labels, s.part, cloud.points);
  s.scale = static_cast<float>(part_scale(cloud.labels, s.part));
  return s;
}

DecoderExample make_example(const Encoder& encoder, const data::AnnotatedCloud& cloud, const TrainSample& sample,
                            std::size_t points_per_sample, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  std::vector<std::size_t> subset;
  if (points_per_sample == 0 || points_per_sample >= n) {
    subset.resize(n);
    std::iota(subset.begin(), subset.end(), std::size_t{0});
  } else {
    std::vector<std::size_t> rest;
    rest.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i)
      if (i != sample.prompt) rest.push_back(i);
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < points_per_sample; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
      std::swap(rest[i], rest[pick(rng)]);
    }
    rest.resize(points_per_sample - 1);
    subset = std::move(rest);
    subset.push_back(sample.prompt);
    std::sort(subset.begin(), subset.end());
  }
  const Tensor all = encoder.features(cloud.points);
  DecoderExample ex;
  ex.features = gather_rows(all, subset);
  ex.points.coords.reserve(subset.size());
  ex.mask.reserve(subset.size());
  for (std::size_t j = 0; j < subset.size(); ++j) {
    ex.points.coords.push_back(cloud.points[subset[j]]);
    ex.mask.push_back(sample.mask[subset[j]]);
    if (subset[j] == sample.prompt) ex.prompt = j;
  }
  if (sample.scale_present) ex.scale = sample.scale;
  return ex;
}

SegLossResult decoder_loss_and_grad(Decoder& decoder, const DecoderExample& ex, const SegLossConfig& cfg,
                                    double weight) {
  Decoder::Tape tape;
  const Tensor prob = decoder.forward(ex.features, ex.points, ex.prompt, ex.scale, &tape);
  SegLossResult r = seg_loss(prob.values(), ex.mask, cfg);
  if (!std::isfinite(r.loss)) return r;
  Tensor dprob = r.grad;
  dprob.reshape({prob.rows(), 1});
  scale_inplace(dprob, static_cast<float>(weight));
  decoder.backward(tape, dprob);
  return r;
}

double decoder_mean_loss(const Decoder& decoder, const std::vector<DecoderExample>& examples,
                         const SegLossConfig& cfg) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) {
    const Tensor prob = decoder.forward(ex.features, ex.points, ex.prompt, ex.scale);
    total += seg_loss(prob.values(), ex.mask, cfg).loss;
  }
  return total / double(examples.size());
}

std::vector<DecoderExample> fixed_examples(const Encoder& encoder, const std::vector<data::AnnotatedCloud>& clouds,
                                           std::size_t points_per_sample, std::uint64_t seed) {
  std::vector<DecoderExample> out;
  for (std::size_t c = 0; c < clouds.size(); ++c) {
    Rng rng(mix_seed(seed, c));
    TrainSample s = sample_target_part(clouds[c], rng);
    s.cloud = c;
    out.push_back(make_example(encoder, clouds[c], s, points_per_sample, mix_seed(seed ^ 0xfeed, c)));
  }
  return out;
}

DecoderTrainLog train_decoder(Decoder& decoder, const Encoder& encoder, const std::vector<data::AnnotatedCloud>& dataset,
                              const DecoderTrainConfig& cfg, const DecoderStepCallback& on_step) {
  if (dataset.empty()) throw ValidationError("train_decoder: empty dataset");
  if (cfg.batch == 0) throw ValidationError("train_decoder: batch must be positive");
  for (const auto& c : dataset)
    if (c.labels.part_count < 2 || c.labels.size() != c.size())
      throw ValidationError("train_decoder: every cloud needs at least 2 labeled parts");
  if (encoder.config().feature_dim != decoder.config().dim)
    throw ValidationError("train_decoder: encoder and decoder dimensions differ");

  nn::AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  DecoderTrainLog log;
  std::vector<std::size_t> order(dataset.size());
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double weight = 1.0 / double(end - start);
      decoder.parameters().zero_grad();
      DecoderStepRecord rec;
      rec.step = global_step;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t c = order[b];
        Rng rng(mix_seed(epoch_seed, c));
        TrainSample s = sample_target_part(dataset[c], rng);
        s.cloud = c;
        s.scale_present = scale_dropout(s.scale, cfg.p_drop, rng).has_value();
        const DecoderExample ex = make_example(encoder, dataset[c], s, cfg.points_per_sample, rng());
        const SegLossResult r = decoder_loss_and_grad(decoder, ex, cfg.loss, weight);
        if (!std::isfinite(r.loss))
          throw DivergenceError("train_decoder: non-finite loss at step " + std::to_string(global_step));
        rec.loss += weight * r.loss;
        rec.bce += weight * r.bce;
        rec.dice += weight * r.dice;
        rec.pi += weight * r.pi;
      }
      nn::adamw_step(decoder.parameters(), opt);
      log.steps.push_back(rec);
      epoch_sum += rec.loss;
      ++epoch_steps;
      ++global_step;
      if (on_step) on_step(epoch, rec);
    }
    log.epoch_loss.push_back(epoch_sum / double(epoch_steps));
  }
  return log;
}

void write_loss_csv(const std::filesystem::path& path, const DecoderTrainLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "step,loss,bce,dice,pi\n";
  for (const auto& r : log.steps) out << r.step << ',' << r.loss << ',' << r.bce << ',' << r.dice << ',' << r.pi << '\n';
}

}  // namespace scalepart
