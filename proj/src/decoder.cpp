#include "scalepart/decoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "scalepart/error.hpp"

namespace scalepart {

namespace {

constexpr double kMaxFrequency = 64.0;
constexpr double kMaxScaleFrequency = 128.0;

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t coordinate_hash(const Vec3& p) {
  // +0.0f folds negative zero onto zero so equal coordinates hash equally.
  std::uint64_t h = splitmix(std::bit_cast<std::uint32_t>(p.x + 0.0f));
  h = splitmix(h ^ std::bit_cast<std::uint32_t>(p.y + 0.0f));
  return splitmix(h ^ std::bit_cast<std::uint32_t>(p.z + 0.0f));
}

Tensor key_rows(const Tensor& x, std::span<const std::size_t> anchors) {
  return anchors.size() == x.rows() ? x : gather_rows(x, anchors);
}

void add_key_grad(const Tensor& dkeys, std::span<const std::size_t> anchors, Tensor& dx) {
  if (anchors.size() == dx.rows()) {
    add_inplace(dx, dkeys);
  } else {
    scatter_add_rows(dkeys, anchors, dx);
  }
}

Tensor sum(Tensor a, const Tensor& b) {
  add_inplace(a, b);
  return a;
}

}  // namespace

std::vector<double> positional_frequencies(std::size_t dim) {
  if (dim == 0 || dim % 6 != 0) throw ValidationError("positional_encoding: dimension must be a multiple of 6");
  const std::size_t k = dim / 6;
  std::vector<double> f(k, 1.0);
  for (std::size_t i = 1; i < k; ++i) f[i] = std::pow(kMaxFrequency, double(i) / double(k - 1));
  return f;
}

Tensor positional_encoding(const PointSet& points, std::size_t dim) {
  const auto freqs = positional_frequencies(dim);
  const std::size_t k = freqs.size();
  Tensor out = Tensor::matrix(points.size(), dim);
  for (std::size_t n = 0; n < points.size(); ++n) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const double c = points[n][axis];
      float* block = out.data() + n * dim + axis * 2 * k;
      for (std::size_t i = 0; i < k; ++i) {
        block[2 * i] = static_cast<float>(std::sin(freqs[i] * c));
        block[2 * i + 1] = static_cast<float>(std::cos(freqs[i] * c));
      }
    }
  }
  return out;
}

std::vector<std::size_t> select_anchors(const PointSet& points, std::size_t count) {
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= points.size()) return idx;
  std::vector<std::uint64_t> h(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) h[i] = coordinate_hash(points[i]);
  auto less = [&](std::size_t a, std::size_t b) { return h[a] != h[b] ? h[a] < h[b] : a < b; };
  std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(count), idx.end(), less);
  idx.resize(count);
  return idx;
}

float clamp_scale(float s, bool* clamped) {
  const float c = std::isnan(s) ? 0.0f : std::clamp(s, 0.0f, 1.0f);
  if (clamped) *clamped = !(c == s);
  return c;
}

std::optional<float> scale_dropout(std::optional<float> s, double p_drop, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < p_drop) return std::nullopt;
  return s;
}

// ---- scale embedding ------------------------------------------------------------------------

ScaleEmbedding::ScaleEmbedding(nn::ParameterStore& store, const std::string& name, std::size_t pairs) {
  if (pairs == 0) throw ValidationError("ScaleEmbedding: at least one frequency pair required");
  Tensor omega = Tensor::vector(pairs);
  for (std::size_t k = 0; k < pairs; ++k)
    omega[k] = pairs == 1 ? 1.0f : static_cast<float>(std::pow(kMaxScaleFrequency, double(k) / double(pairs - 1)));
  omega_ = &store.add(name + ".frequency", std::move(omega));
  phi_ = &store.add(name + ".phase", Tensor::vector(pairs));
}

Tensor ScaleEmbedding::forward(float s) const {
  const std::size_t m = pairs();
  Tensor e = Tensor::matrix(1, 2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    const double arg = double(omega_->value[k]) * s + double(phi_->value[k]);
    e[2 * k] = static_cast<float>(std::sin(arg));
    e[2 * k + 1] = static_cast<float>(std::cos(arg));
  }
  return e;
}

void ScaleEmbedding::backward(float s, const Tensor& de) {
  for (std::size_t k = 0; k < pairs(); ++k) {
    const double arg = double(omega_->value[k]) * s + double(phi_->value[k]);
    const double darg = double(de[2 * k]) * std::cos(arg) - double(de[2 * k + 1]) * std::sin(arg);
    omega_->grad[k] = static_cast<float>(omega_->grad[k] + darg * s);
    phi_->grad[k] = static_cast<float>(phi_->grad[k] + darg);
  }
}

// ---- FiLM -----------------------------------------------------------------------------------

FilmLayer::FilmLayer(nn::ParameterStore& store, const std::string& name, std::size_t dim, std::size_t embed_dim,
                     float gate_init)
    : dim_(dim),
      norm_(store, name + ".norm", embed_dim),
      proj_(nn::Linear::zeros(store, name + ".proj", embed_dim, 2 * dim)),
      gate_(&store.add(name + ".gate", Tensor::vector(1, gate_init))) {}

Tensor FilmLayer::forward(const Tensor& x, const Tensor* e, Cache* cache) const {
  if (!e) return x;
  Cache local;
  Cache& c = cache ? *cache : local;
  c.x = x;
  c.e_norm = norm_.forward(*e, &c.norm);
  c.gb = proj_.forward(c.e_norm);
  const double a = gate_->value[0];
  std::vector<float> mul(dim_), add(dim_);
  for (std::size_t j = 0; j < dim_; ++j) {
    mul[j] = static_cast<float>(1.0 + a * c.gb[j]);
    add[j] = static_cast<float>(a * c.gb[dim_ + j]);
  }
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t n = 0; n < x.rows(); ++n)
    for (std::size_t j = 0; j < dim_; ++j) out(n, j) = x(n, j) * mul[j] + add[j];
  return out;
}

Tensor FilmLayer::backward(const Cache& c, const Tensor& dy, Tensor* de) {
  const double a = gate_->value[0];
  std::vector<double> dgamma(dim_, 0.0), dbeta(dim_, 0.0);
  Tensor dx = Tensor::zeros_like(dy);
  for (std::size_t n = 0; n < dy.rows(); ++n) {
    for (std::size_t j = 0; j < dim_; ++j) {
      const double g = dy(n, j);
      dgamma[j] += g * c.x(n, j);
      dbeta[j] += g;
      dx(n, j) = static_cast<float>(g * (1.0 + a * c.gb[j]));
    }
  }
  double dgate = 0.0;
  Tensor dgb = Tensor::matrix(1, 2 * dim_);
  for (std::size_t j = 0; j < dim_; ++j) {
    dgate += dgamma[j] * c.gb[j] + dbeta[j] * c.gb[dim_ + j];
    dgb[j] = static_cast<float>(a * dgamma[j]);
    dgb[dim_ + j] = static_cast<float>(a * dbeta[j]);
  }
  gate_->grad[0] = static_cast<float>(gate_->grad[0] + dgate);
  const Tensor de_norm = proj_.backward(c.e_norm, dgb);
  const Tensor de_local = norm_.backward(c.norm, de_norm);
  if (de) add_inplace(*de, de_local);
  return dx;
}

// ---- Transformer block ----------------------------------------------------------------------

TransformerBlock::TransformerBlock(nn::ParameterStore& store, const std::string& name, const DecoderConfig& cfg,
                                   Rng& rng)
    : ln1_(store, name + ".ln1", cfg.dim),
      ln2_(store, name + ".ln2", cfg.dim),
      attn_(store, name + ".attn", cfg.dim, cfg.heads, rng),
      ffn_(store, name + ".ffn", cfg.dim, cfg.ffn_hidden, rng) {}

Tensor TransformerBlock::forward(const Tensor& x, std::span<const std::size_t> anchors, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.x_norm = ln1_.forward(x, &c.ln1);
  c.keys = key_rows(c.x_norm, anchors);
  c.y = sum(x, attn_.forward(c.x_norm, c.keys, c.keys, &c.attn));
  c.y_norm = ln2_.forward(c.y, &c.ln2);
  return sum(c.y, ffn_.forward(c.y_norm, &c.ffn));
}

Tensor TransformerBlock::backward(const Cache& c, std::span<const std::size_t> anchors, const Tensor& dy) {
  Tensor dmid = sum(dy, ln2_.backward(c.ln2, ffn_.backward(c.ffn, dy)));
  auto g = attn_.backward(c.attn, dmid);
  Tensor dnorm = std::move(g.dq);
  add_inplace(g.dk, g.dv);
  add_key_grad(g.dk, anchors, dnorm);
  return sum(std::move(dmid), ln1_.backward(c.ln1, dnorm));
}

// ---- cross layer ----------------------------------------------------------------------------

CrossLayer::CrossLayer(nn::ParameterStore& store, const std::string& name, const DecoderConfig& cfg, Rng& rng)
    : lq1_(store, name + ".ln_prompt1", cfg.dim),
      ly1_(store, name + ".ln_points1", cfg.dim),
      ly2_(store, name + ".ln_points2", cfg.dim),
      lq2_(store, name + ".ln_prompt2", cfg.dim),
      lf_(store, name + ".ln_ffn", cfg.dim),
      to_points_(store, name + ".prompt_to_points", cfg.dim, cfg.heads, rng),
      to_prompt_(store, name + ".points_to_prompt", cfg.dim, cfg.heads, rng),
      ffn_(store, name + ".ffn", cfg.dim, cfg.ffn_hidden, rng) {}

std::pair<Tensor, Tensor> CrossLayer::forward(const Tensor& q, const Tensor& y, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.q = q;
  c.y = y;
  c.q1n = lq1_.forward(q, &c.lq1);
  c.y1n = ly1_.forward(y, &c.ly1);
  c.q_out = sum(q, to_points_.forward(c.q1n, c.y1n, c.y1n, &c.to_points));
  c.y2n = ly2_.forward(y, &c.ly2);
  c.q2n = lq2_.forward(c.q_out, &c.lq2);
  c.z = sum(y, to_prompt_.forward(c.y2n, c.q2n, c.q2n, &c.to_prompt));
  c.zn = lf_.forward(c.z, &c.lf);
  Tensor y_out = sum(c.z, ffn_.forward(c.zn, &c.ffn));
  return {c.q_out, std::move(y_out)};
}

std::pair<Tensor, Tensor> CrossLayer::backward(const Cache& c, const Tensor& dq_out, const Tensor& dy_out) {
  const Tensor dz = sum(dy_out, lf_.backward(c.lf, ffn_.backward(c.ffn, dy_out)));
  auto g2 = to_prompt_.backward(c.to_prompt, dz);
  Tensor dy = sum(dz, ly2_.backward(c.ly2, g2.dq));
  add_inplace(g2.dk, g2.dv);
  Tensor dq_mid = sum(dq_out, lq2_.backward(c.lq2, g2.dk));
  auto g1 = to_points_.backward(c.to_points, dq_mid);
  Tensor dq = sum(std::move(dq_mid), lq1_.backward(c.lq1, g1.dq));
  add_inplace(g1.dk, g1.dv);
  add_inplace(dy, ly1_.backward(c.ly1, g1.dk));
  return {std::move(dq), std::move(dy)};
}

// ---- mask head ------------------------------------------------------------------------------

MaskHead::MaskHead(nn::ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng)
    : fc1_(store, name + ".fc1", dim, dim / 2, rng), fc2_(store, name + ".fc2", dim / 2, 1, rng) {}

Tensor MaskHead::forward(const Tensor& h, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.h = h;
  c.pre = fc1_.forward(h);
  c.act = nn::gelu_forward(c.pre);
  c.prob = nn::sigmoid_forward(fc2_.forward(c.act));
  return c.prob;
}

Tensor MaskHead::backward(const Cache& c, const Tensor& dprob) {
  const Tensor dlogit = nn::sigmoid_backward(c.prob, dprob);
  const Tensor dact = fc2_.backward(c.act, dlogit);
  return fc1_.backward(c.h, nn::gelu_backward(c.pre, dact));
}

// ---- decoder --------------------------------------------------------------------------------

Decoder::Decoder(const DecoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<nn::ParameterStore>()) {
  if (cfg.dim == 0 || cfg.dim % 6 != 0) throw ValidationError("Decoder: dimension must be a multiple of 6");
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) throw ValidationError("Decoder: dimension must divide into heads");
  if (cfg.dim < 2) throw ValidationError("Decoder: dimension too small for the mask head");
  Rng rng(seed);
  embed_ = ScaleEmbedding(*store_, "scale_embed", cfg.scale_pairs);
  for (std::size_t l = 0; l < cfg.modulator_layers; ++l) {
    const std::string name = "modulator." + std::to_string(l);
    film_.emplace_back(*store_, name + ".film", cfg.dim, 2 * cfg.scale_pairs, cfg.film_gate_init);
    blocks_.emplace_back(*store_, name + ".block", cfg, rng);
  }
  for (std::size_t l = 0; l < cfg.cross_layers; ++l)
    cross_.emplace_back(*store_, "cross." + std::to_string(l), cfg, rng);
  head_ = MaskHead(*store_, "head", cfg.dim, rng);
}

Tensor Decoder::input_features(const Tensor& features, const PointSet& points) const {
  if (features.rows() != points.size() || features.cols() != cfg_.dim)
    throw ValidationError("Decoder: features must be N x " + std::to_string(cfg_.dim));
  return sum(features, positional_encoding(points, cfg_.dim));
}

Tensor Decoder::modulate(const Tensor& x0, std::span<const std::size_t> anchors, std::optional<float> scale,
                         Tape* tape) const {
  Tape local;
  Tape& t = tape ? *tape : local;
  t.anchors.assign(anchors.begin(), anchors.end());
  t.scale = scale;
  t.film.assign(film_.size(), {});
  t.blocks.assign(blocks_.size(), {});
  t.embedding = scale ? embed_.forward(*scale) : Tensor();
  const Tensor* e = scale ? &t.embedding : nullptr;
  Tensor x = x0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = film_[l].forward(x, e, tape ? &t.film[l] : nullptr);
    x = blocks_[l].forward(x, anchors, tape ? &t.blocks[l] : nullptr);
  }
  return x;
}

Tensor Decoder::exchange(const Tensor& modulated, std::size_t prompt, Tape* tape) const {
  if (prompt >= modulated.rows()) throw ValidationError("Decoder: invalid prompt index " + std::to_string(prompt));
  if (tape) {
    tape->prompt = prompt;
    tape->cross.assign(cross_.size(), {});
  }
  const std::size_t row[1] = {prompt};
  Tensor q = gather_rows(modulated, row);
  Tensor y = modulated;
  for (std::size_t l = 0; l < cross_.size(); ++l) {
    auto [qn, yn] = cross_[l].forward(q, y, tape ? &tape->cross[l] : nullptr);
    q = std::move(qn);
    y = std::move(yn);
  }
  return y;
}

Tensor Decoder::head(const Tensor& h, Tape* tape) const { return head_.forward(h, tape ? &tape->head : nullptr); }

Tensor Decoder::forward(const Tensor& features, const PointSet& points, std::size_t prompt,
                        std::optional<float> scale, Tape* tape) const {
  if (prompt >= points.size()) throw ValidationError("Decoder: invalid prompt index " + std::to_string(prompt));
  if (scale) scale = clamp_scale(*scale);
  const Tensor x0 = input_features(features, points);
  const auto anchors = select_anchors(points, cfg_.anchor_count);
  return head(exchange(modulate(x0, anchors, scale, tape), prompt, tape), tape);
}

Tensor Decoder::backward_head(const Tape& tape, const Tensor& dprob) { return head_.backward(tape.head, dprob); }

Tensor Decoder::backward_exchange(const Tape& tape, const Tensor& dh) {
  Tensor dq = Tensor::matrix(1, cfg_.dim);
  Tensor dy = dh;
  for (std::size_t l = cross_.size(); l-- > 0;) {
    auto [gq, gy] = cross_[l].backward(tape.cross[l], dq, dy);
    dq = std::move(gq);
    dy = std::move(gy);
  }
  const std::size_t row[1] = {tape.prompt};
  scatter_add_rows(dq, row, dy);
  return dy;
}

Tensor Decoder::backward_modulate(const Tape& tape, const Tensor& dmod) {
  Tensor d = dmod;
  Tensor de;
  if (tape.scale) de = Tensor::matrix(1, 2 * cfg_.scale_pairs);
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    d = blocks_[l].backward(tape.blocks[l], tape.anchors, d);
    if (tape.scale) d = film_[l].backward(tape.film[l], d, &de);
  }
  if (tape.scale) embed_.backward(*tape.scale, de);
  return d;
}

Tensor Decoder::backward(const Tape& tape, const Tensor& dprob) {
  return backward_modulate(tape, backward_exchange(tape, backward_head(tape, dprob)));
}

}  // namespace scalepart
