#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scalepart/tensor.hpp"

namespace scalepart {

using Rng = std::mt19937_64;

namespace nn {

// A learnable tensor with its accumulated gradient and AdamW moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
};

// Owns named parameters. Element addresses are stable for the lifetime of the store, so layers
// keep raw Param pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Param& add(std::string name, Tensor init);
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t step_count() const { return step_; }
  void set_step_count(std::size_t s) { step_ = s; }

 private:
  std::deque<Param> params_;
  std::size_t step_ = 0;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
Tensor uniform_init(std::size_t rows, std::size_t cols, Rng& rng, float bound);
float default_bound(std::size_t fan_in);

// ---- kernels ------------------------------------------------------------------------------

// y = x W + b over the matrix view of x (rows x Din).
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
// Writes dx when non-null; accumulates into dw / db when non-null.
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db);

inline constexpr float kLayerNormEps = 1e-5f;

struct LayerNormCache {
  Tensor normalized;            // pre-affine output
  std::vector<double> inv_std;  // per row
};
Tensor layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache,
                          float eps = kLayerNormEps);
Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy, Tensor* dgain,
                           Tensor* dbias);

// Exact GELU, x * Phi(x).
Tensor gelu_forward(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

inline constexpr float kProbClamp = 1e-7f;
// Logistic function with the output clamped to [kProbClamp, 1 - kProbClamp].
float sigmoid(float x);
Tensor sigmoid_forward(const Tensor& x);
// Gradient through the logistic function; the clamp is treated as pass-through.
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

// Row-wise softmax with max subtraction and binary64 normalisation.
void softmax_rows(Tensor& x);

// ---- layers -------------------------------------------------------------------------------

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  // Zero-initialised weights and bias.
  static Linear zeros(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x) const;
  // Accumulates parameter gradients and returns dL/dx (empty when need_dx is false).
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_dx = true);

  Param& weight() { return *w_; }
  Param& bias() { return *b_; }
  const Param& weight() const { return *w_; }
  const Param& bias() const { return *b_; }
  std::size_t in_dim() const { return w_->value.rows(); }
  std::size_t out_dim() const { return w_->value.cols(); }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);

  Tensor forward(const Tensor& x, LayerNormCache* cache) const;
  Tensor backward(const LayerNormCache& cache, const Tensor& dy);

  Param& gain() { return *gain_; }
  Param& bias() { return *bias_; }

 private:
  Param* gain_ = nullptr;
  Param* bias_ = nullptr;
};

// Multi-head scaled dot-product attention with input and output projections.
// Queries Lq x D, keys and values Lk x D. With a single key the softmax is identically 1, so the
// query/key projections are skipped (their values cannot affect the output and their gradients
// are exactly zero).
class MultiHeadAttention {
 public:
  struct Cache {
    Tensor q_in, k_in, v_in;
    Tensor q, k, v;               // projected
    std::vector<Tensor> probs;    // per head, Lq x Lk
    Tensor context;               // Lq x D, heads concatenated
    bool single_key = false;
  };
  struct Grads {
    Tensor dq, dk, dv;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);

  Tensor forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, Cache* cache) const;
  Grads backward(const Cache& cache, const Tensor& dy);

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  Linear& query() { return wq_; }
  Linear& key() { return wk_; }
  Linear& value() { return wv_; }
  Linear& output() { return wo_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 0;
  Linear wq_, wk_, wv_, wo_;
};

// Two-layer GELU MLP (D -> hidden -> D). The residual connection is the caller's.
class FeedForward {
 public:
  struct Cache {
    Tensor x, pre, act;
  };

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);

  Linear& first() { return fc1_; }
  Linear& second() { return fc2_; }

 private:
  Linear fc1_, fc2_;
};

}  // namespace nn
}  // namespace scalepart
