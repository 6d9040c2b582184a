#include "scalepart/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scalepart/error.hpp"

namespace scalepart::nn {

Param& ParameterStore::add(std::string name, Tensor init) {
  if (find(name) != nullptr) throw ValidationError("ParameterStore: duplicate parameter '" + name + "'");
  Param p;
  p.name = std::move(name);
  p.grad = Tensor::zeros_like(init);
  p.m = Tensor::zeros_like(init);
  p.v = Tensor::zeros_like(init);
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Param* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Param* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Param& ParameterStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ValidationError("ParameterStore: unknown parameter '" + std::string(name) + "'");
}

const Param& ParameterStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ValidationError("ParameterStore: unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.zero();
}

float default_bound(std::size_t fan_in) { return 1.0f / std::sqrt(static_cast<float>(std::max<std::size_t>(fan_in, 1))); }

Tensor uniform_init(std::size_t rows, std::size_t cols, Rng& rng, float bound) {
  Tensor t = Tensor::matrix(rows, cols);
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// ---- kernels ------------------------------------------------------------------------------

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw ValidationError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                          shape_string(w.shape()) + " / bias " + shape_string(b.shape()));
  }
  Tensor y;
  matmul(x, w, y);
  const std::size_t n = y.cols();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    float* r = y.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) r[j] += b[j];
  }
  if (x.rank() > 2) {
    auto shape = x.shape();
    shape.back() = n;
    y.reshape(shape);
  }
  return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
  if (dy.cols() != w.cols() || dy.rows() != x.rows()) throw ValidationError("linear_backward: shape mismatch");
  if (dw) matmul_tn(x, dy, *dw, true);
  if (db) add_column_sums(dy, *db);
  if (dx) {
    matmul_nt(dy, w, *dx);
    if (x.rank() > 2) dx->reshape(x.shape());
  }
}

Tensor layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache,
                          float eps) {
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d) throw ValidationError("layer_norm: affine size mismatch");
  Tensor y = Tensor::zeros_like(x);
  Tensor normalized = Tensor::zeros_like(x);
  std::vector<double> inv_std(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const float* r = x.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += r[j];
    mean /= double(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= double(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (r[j] - mean) * is;
      normalized[i * d + j] = static_cast<float>(xh);
      y[i * d + j] = static_cast<float>(xh * gain[j] + bias[j]);
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy, Tensor* dgain,
                           Tensor* dbias) {
  const std::size_t d = dy.cols();
  const Tensor& xh = cache.normalized;
  Tensor dx = Tensor::zeros_like(dy);
  std::vector<double> dg(d, 0.0), dbv(d, 0.0);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    const float* g = dy.data() + i * d;
    const float* h = xh.data() + i * d;
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = double(g[j]) * gain[j];
      sum_dxh += dxh;
      sum_dxh_xh += dxh * h[j];
      dg[j] += double(g[j]) * h[j];
      dbv[j] += g[j];
    }
    const double is = cache.inv_std[i];
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = double(g[j]) * gain[j];
      dx[i * d + j] = static_cast<float>(is * (dxh - sum_dxh / double(d) - h[j] * sum_dxh_xh / double(d)));
    }
  }
  if (dgain) {
    for (std::size_t j = 0; j < d; ++j) (*dgain)[j] = static_cast<float>((*dgain)[j] + dg[j]);
  }
  if (dbias) {
    for (std::size_t j = 0; j < d; ++j) (*dbias)[j] = static_cast<float>((*dbias)[j] + dbv[j]);
  }
  return dx;
}

namespace {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Tensor gelu_forward(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(gelu(x[i]));
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = static_cast<float>(dy[i] * gelu_grad(x[i]));
  return dx;
}

float sigmoid(float x) {
  const double s = 1.0 / (1.0 + std::exp(-double(x)));
  return std::clamp(static_cast<float>(s), kProbClamp, 1.0f - kProbClamp);
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = Tensor::zeros_like(y);
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = static_cast<float>(double(dy[i]) * y[i] * (1.0 - double(y[i])));
  return dx;
}

void softmax_rows(Tensor& x) {
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    float* r = x.data() + i * n;
    const float mx = *std::max_element(r, r + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(double(r[j]) - mx);
      r[j] = static_cast<float>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) r[j] = static_cast<float>(r[j] * inv);
  }
}

// ---- layers -------------------------------------------------------------------------------

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  w_ = &store.add(name + ".weight", uniform_init(in, out, rng, default_bound(in)));
  b_ = &store.add(name + ".bias", Tensor::vector(out));
}

Linear Linear::zeros(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out) {
  Linear l;
  l.w_ = &store.add(name + ".weight", Tensor::matrix(in, out));
  l.b_ = &store.add(name + ".bias", Tensor::vector(out));
  return l;
}

Tensor Linear::forward(const Tensor& x) const { return linear_forward(x, w_->value, b_->value); }

Tensor Linear::backward(const Tensor& x, const Tensor& dy, bool need_dx) {
  Tensor dx;
  linear_backward(x, w_->value, dy, need_dx ? &dx : nullptr, &w_->grad, &b_->grad);
  return dx;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim) {
  gain_ = &store.add(name + ".gain", Tensor::vector(dim, 1.0f));
  bias_ = &store.add(name + ".bias", Tensor::vector(dim));
}

Tensor LayerNorm::forward(const Tensor& x, LayerNormCache* cache) const {
  return layer_norm_forward(x, gain_->value, bias_->value, cache);
}

Tensor LayerNorm::backward(const LayerNormCache& cache, const Tensor& dy) {
  return layer_norm_backward(cache, gain_->value, dy, &gain_->grad, &bias_->grad);
}

namespace {

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t dh) {
  Tensor out = Tensor::matrix(x.rows(), dh);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::copy_n(x.data() + i * x.cols() + head * dh, dh, out.data() + i * dh);
  }
  return out;
}

void head_store(const Tensor& src, std::size_t head, std::size_t dh, Tensor& dst) {
  for (std::size_t i = 0; i < src.rows(); ++i) {
    std::copy_n(src.data() + i * dh, dh, dst.data() + i * dst.cols() + head * dh);
  }
}

}  // namespace

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim,
                                       std::size_t heads, Rng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ValidationError("mha: dimension " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                          " heads");
  }
  wq_ = Linear(store, name + ".q", dim, dim, rng);
  wk_ = Linear(store, name + ".k", dim, dim, rng);
  wv_ = Linear(store, name + ".v", dim, dim, rng);
  wo_ = Linear(store, name + ".o", dim, dim, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, Cache* cache) const {
  if (q_in.cols() != dim_ || k_in.cols() != dim_ || v_in.cols() != dim_ || k_in.rows() != v_in.rows() ||
      k_in.rows() == 0) {
    throw ValidationError("mha: expected Q Lq x D, K/V Lk x D with D = " + std::to_string(dim_));
  }
  const std::size_t lq = q_in.rows(), lk = k_in.rows(), dh = dim_ / heads_;
  const bool single_key = lk == 1;

  Tensor v = wv_.forward(v_in);
  Tensor q, k;
  Tensor context = Tensor::matrix(lq, dim_);
  std::vector<Tensor> probs;
  if (single_key) {
    for (std::size_t i = 0; i < lq; ++i) std::copy_n(v.data(), dim_, context.data() + i * dim_);
  } else {
    q = wq_.forward(q_in);
    k = wk_.forward(k_in);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    probs.resize(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      Tensor qh = head_slice(q, h, dh);
      Tensor kh_t = transpose(head_slice(k, h, dh));
      Tensor vh = head_slice(v, h, dh);
      Tensor s;
      matmul(qh, kh_t, s);
      scale_inplace(s, scale);
      softmax_rows(s);
      Tensor ch;
      matmul(s, vh, ch);
      head_store(ch, h, dh, context);
      probs[h] = std::move(s);
    }
  }
  Tensor out = wo_.forward(context);
  if (cache) {
    cache->q_in = q_in;
    cache->k_in = k_in;
    cache->v_in = v_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
    cache->single_key = single_key;
  }
  return out;
}

MultiHeadAttention::Grads MultiHeadAttention::backward(const Cache& cache, const Tensor& dy) {
  const std::size_t lq = cache.q_in.rows(), lk = cache.k_in.rows(), dh = dim_ / heads_;
  Tensor dcontext = wo_.backward(cache.context, dy);
  Grads g;
  Tensor dv = Tensor::matrix(lk, dim_);
  if (cache.single_key) {
    add_column_sums(dcontext, dv);
    g.dv = wv_.backward(cache.v_in, dv);
    g.dq = Tensor::matrix(lq, dim_);
    g.dk = Tensor::matrix(lk, dim_);
    return g;
  }
  Tensor dq = Tensor::matrix(lq, dim_);
  Tensor dk = Tensor::matrix(lk, dim_);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor& p = cache.probs[h];
    Tensor qh = head_slice(cache.q, h, dh);
    Tensor kh = head_slice(cache.k, h, dh);
    Tensor vh = head_slice(cache.v, h, dh);
    Tensor dch = head_slice(dcontext, h, dh);

    Tensor dp;
    matmul_nt(dch, vh, dp);  // Lq x Lk
    Tensor dvh;
    matmul_tn(p, dch, dvh);  // Lk x dh
    // softmax backward: ds = p * (dp - <dp, p>)
    Tensor ds = Tensor::zeros_like(p);
    for (std::size_t i = 0; i < lq; ++i) {
      const float* pr = p.data() + i * lk;
      const float* dpr = dp.data() + i * lk;
      double inner = 0.0;
      for (std::size_t j = 0; j < lk; ++j) inner += double(pr[j]) * dpr[j];
      for (std::size_t j = 0; j < lk; ++j) ds[i * lk + j] = static_cast<float>(pr[j] * (dpr[j] - inner) * scale);
    }
    Tensor dqh, dkh;
    matmul(ds, kh, dqh);     // Lq x dh
    matmul_tn(ds, qh, dkh);  // Lk x dh
    head_store(dqh, h, dh, dq);
    head_store(dkh, h, dh, dk);
    head_store(dvh, h, dh, dv);
  }
  g.dq = wq_.backward(cache.q_in, dq);
  g.dk = wk_.backward(cache.k_in, dk);
  g.dv = wv_.backward(cache.v_in, dv);
  return g;
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
                         Rng& rng) {
  fc1_ = Linear(store, name + ".fc1", dim, hidden, rng);
  fc2_ = Linear(store, name + ".fc2", hidden, dim, rng);
}

Tensor FeedForward::forward(const Tensor& x, Cache* cache) const {
  Tensor pre = fc1_.forward(x);
  Tensor act = gelu_forward(pre);
  Tensor y = fc2_.forward(act);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

Tensor FeedForward::backward(const Cache& cache, const Tensor& dy) {
  Tensor dact = fc2_.backward(cache.act, dy);
  Tensor dpre = gelu_backward(cache.pre, dact);
  return fc1_.backward(cache.x, dpre);
}

}  // namespace scalepart::nn
