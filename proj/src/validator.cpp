#include "scalepart/validator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scalepart/error.hpp"
#include "scalepart/optim.hpp"

namespace scalepart::data {

Tensor validator_input(const AnnotatedCloud& cloud, std::size_t points, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n == 0) throw ValidationError("validator_input: empty cloud");
  Rng rng(seed);
  std::vector<std::size_t> pick;
  if (n >= points) {
    pick.resize(n);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(points);
  } else {
    pick.resize(n);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    while (pick.size() < points) pick.push_back(any(rng));
  }
  Tensor input = Tensor::matrix(points, 4);
  for (std::size_t r = 0; r < points; ++r) {
    const auto& p = cloud.points[pick[r]];
    input(r, 0) = p.x;
    input(r, 1) = p.y;
    input(r, 2) = p.z;
    input(r, 3) = cloud.labeled() ? static_cast<float>(cloud.labels.labels[pick[r]]) : 0.0f;
  }
  return input;
}

ValidatorModel::ValidatorModel(std::uint64_t seed) : store_(std::make_unique<nn::ParameterStore>()) {
  Rng rng(seed);
  point1_ = nn::Linear(*store_, "point1", 4, 64, rng);
  point2_ = nn::Linear(*store_, "point2", 64, 128, rng);
  head1_ = nn::Linear(*store_, "head1", 128, 64, rng);
  head2_ = nn::Linear(*store_, "head2", 64, 1, rng);
}

namespace {

void relu_inplace(Tensor& t) {
  for (auto& v : t.values()) v = std::max(v, 0.0f);
}

struct Trace {
  Tensor h1, h2;                       // per point, post-ReLU
  Tensor pooled, a;                    // 1 x 128, 1 x 64 (post-ReLU)
  std::vector<std::size_t> argmax;     // per pooled channel
  double logit = 0.0;
};

}  // namespace

namespace {

Trace run(const nn::Linear& p1, const nn::Linear& p2, const nn::Linear& q1, const nn::Linear& q2, const Tensor& x) {
  Trace t;
  t.h1 = p1.forward(x);
  relu_inplace(t.h1);
  t.h2 = p2.forward(t.h1);
  relu_inplace(t.h2);
  const std::size_t c = t.h2.cols();
  t.pooled = Tensor::matrix(1, c);
  t.argmax.assign(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    float best = t.h2(0, j);
    for (std::size_t i = 1; i < t.h2.rows(); ++i) {
      if (t.h2(i, j) > best) {
        best = t.h2(i, j);
        t.argmax[j] = i;
      }
    }
    t.pooled(0, j) = best;
  }
  t.a = q1.forward(t.pooled);
  relu_inplace(t.a);
  t.logit = q2.forward(t.a)[0];
  return t;
}

}  // namespace

double ValidatorModel::logit(const Tensor& input) const { return run(point1_, point2_, head1_, head2_, input).logit; }

double ValidatorModel::probability(const Tensor& input) const { return 1.0 / (1.0 + std::exp(-logit(input))); }

double ValidatorModel::score(const AnnotatedCloud& cloud, std::uint64_t sample_seed) const {
  return probability(validator_input(cloud, kValidatorPoints, sample_seed));
}

void ValidatorModel::accumulate_gradient(const Tensor& input, double dlogit) {
  const Trace t = run(point1_, point2_, head1_, head2_, input);
  Tensor dz = Tensor::matrix(1, 1, static_cast<float>(dlogit));
  Tensor da = head2_.backward(t.a, dz);
  for (std::size_t j = 0; j < da.size(); ++j) {
    if (t.a[j] <= 0.0f) da[j] = 0.0f;
  }
  Tensor dpool = head1_.backward(t.pooled, da);

  // Max pooling routes each channel's gradient to its argmax point; only those rows are touched.
  const std::size_t c2 = t.h2.cols(), c1 = t.h1.cols();
  auto& w2 = point2_.weight();
  auto& b2 = point2_.bias();
  std::vector<std::size_t> rows;
  std::vector<double> dh1;  // rows.size() x c1
  for (std::size_t j = 0; j < c2; ++j) {
    const double g = dpool[j];
    if (g == 0.0 || t.pooled[j] <= 0.0f) continue;
    const std::size_t r = t.argmax[j];
    auto it = std::find(rows.begin(), rows.end(), r);
    std::size_t slot = static_cast<std::size_t>(it - rows.begin());
    if (it == rows.end()) {
      rows.push_back(r);
      dh1.resize(rows.size() * c1, 0.0);
    }
    for (std::size_t k = 0; k < c1; ++k) {
      w2.grad(k, j) += static_cast<float>(t.h1(r, k) * g);
      dh1[slot * c1 + k] += w2.value(k, j) * g;
    }
    b2.grad[j] += static_cast<float>(g);
  }
  auto& w1 = point1_.weight();
  auto& b1 = point1_.bias();
  for (std::size_t s = 0; s < rows.size(); ++s) {
    const std::size_t r = rows[s];
    for (std::size_t k = 0; k < c1; ++k) {
      if (t.h1(r, k) <= 0.0f) continue;
      const double g = dh1[s * c1 + k];
      for (std::size_t d = 0; d < input.cols(); ++d) w1.grad(d, k) += static_cast<float>(input(r, d) * g);
      b1.grad[k] += static_cast<float>(g);
    }
  }
}

TrainedValidator train_validator(const std::vector<AnnotatedCloud>& positives,
                                 const std::vector<AnnotatedCloud>& negatives, const ValidatorConfig& cfg) {
  if (positives.empty() || negatives.empty()) {
    throw ValidationError("train_validator: both positive and negative examples are required");
  }
  Rng rng(cfg.seed);
  struct Example {
    Tensor input;
    float label;
  };
  std::vector<Example> train, held;
  auto split = [&](const std::vector<AnnotatedCloud>& clouds, float label) {
    std::vector<std::size_t> order(clouds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * double(clouds.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
      Example e{validator_input(clouds[order[i]], cfg.points, cfg.seed + order[i] * 7919 + (label > 0 ? 1 : 2)), label};
      (i < n_held ? held : train).push_back(std::move(e));
    }
  };
  split(positives, 1.0f);
  split(negatives, 0.0f);

  TrainedValidator out;
  out.model = std::make_unique<ValidatorModel>(cfg.seed);
  ValidatorModel& model = *out.model;
  nn::AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      model.parameters().zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const Example& e = train[order[i]];
        const double z = model.logit(e.input);
        const double p = 1.0 / (1.0 + std::exp(-z));
        total += e.label > 0 ? std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        model.accumulate_gradient(e.input, (p - e.label) / double(end - start));
      }
      nn::adamw_step(model.parameters(), opt);
    }
    out.epoch_loss.push_back(total / double(std::max<std::size_t>(order.size(), 1)));
  }

  auto accuracy = [&](const std::vector<Example>& set) {
    if (set.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& e : set) correct += ((model.probability(e.input) >= 0.5) == (e.label > 0)) ? 1 : 0;
    return double(correct) / double(set.size());
  };
  out.train_accuracy = accuracy(train);
  out.heldout_accuracy = accuracy(held);
  out.heldout_count = held.size();
  return out;
}

AnnotatedCloud corrupt_labels(const AnnotatedCloud& cloud, Corruption kind, double fraction, std::uint64_t seed) {
  AnnotatedCloud out = cloud;
  out.source_id = cloud.source_id + "/corrupt";
  Rng rng(seed);
  auto& labels = out.labels.labels;
  const std::size_t n = labels.size();
  if (n == 0 || cloud.labels.part_count == 0) return out;
  std::uniform_int_distribution<std::uint32_t> any_part(0, cloud.labels.part_count - 1);
  switch (kind) {
    case Corruption::Shuffle: {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(std::round(std::clamp(fraction, 0.0, 1.0) * double(n))));
      std::vector<std::uint32_t> vals;
      for (auto i : idx) vals.push_back(labels[i]);
      std::shuffle(vals.begin(), vals.end(), rng);
      for (std::size_t k = 0; k < idx.size(); ++k) labels[idx[k]] = vals[k];
      break;
    }
    case Corruption::Merge: {
      if (cloud.labels.part_count < 2) break;
      const std::uint32_t from = any_part(rng);
      std::uint32_t to = any_part(rng);
      while (to == from) to = any_part(rng);
      for (auto& l : labels) {
        if (l == from) l = to;
      }
      out.labels = PartLabelMap::from_labels(std::move(labels), true);
      break;
    }
    case Corruption::Split: {
      const std::uint32_t part = any_part(rng);
      std::normal_distribution<double> g(0.0, 1.0);
      const double nx = g(rng), ny = g(rng), nz = g(rng);
      double cx = 0, cy = 0, cz = 0, count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != part) continue;
        cx += cloud.points[i].x;
        cy += cloud.points[i].y;
        cz += cloud.points[i].z;
        count += 1;
      }
      cx /= count;
      cy /= count;
      cz /= count;
      const std::uint32_t fresh = cloud.labels.part_count;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != part) continue;
        const auto& p = cloud.points[i];
        if ((p.x - cx) * nx + (p.y - cy) * ny + (p.z - cz) * nz > 0) {
          labels[i] = fresh;
        }
      }
      out.labels = PartLabelMap::from_labels(std::move(labels), true);
      break;
    }
  }
  return out;
}

QualityVerdict quality_filter(const AnnotatedCloud& cloud, const ValidatorModel& model, double threshold) {
  if (cloud.size() == 0) throw ValidationError("quality_filter: empty cloud");
  QualityVerdict v;
  v.score = model.score(cloud);
  v.keep = v.score >= threshold;
  return v;
}

}  // namespace scalepart::data
