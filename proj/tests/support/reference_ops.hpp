#pragma once

#include <cstddef>
#include <vector>

#include "scalepart/tensor.hpp"

// Straightforward binary64 re-implementations of the learned operations, used as oracles.
namespace scalepart::reference {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  explicit Mat(const Tensor& t);
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

double gelu(double x);
Mat linear(const Mat& x, const Tensor& w, const Tensor& b);
Mat layer_norm(const Mat& x, const Tensor& gain, const Tensor& bias);
Mat mha(const Mat& q, const Mat& k, const Mat& v, std::size_t heads, const Tensor& wq, const Tensor& bq,
        const Tensor& wk, const Tensor& bk, const Tensor& wv, const Tensor& bv, const Tensor& wo, const Tensor& bo);
Mat ffn(const Mat& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);
// x * (1 + a * gamma) + a * beta with [gamma, beta] = Linear(LayerNorm(e)).
Mat film(const Mat& x, const Mat& e, const Tensor& ln_gain, const Tensor& ln_bias, const Tensor& w, const Tensor& b,
         double gate);
Mat scale_embed(double s, const Tensor& omega, const Tensor& phi);
Mat mask_head(const Mat& h, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

double weighted_sum(const Mat& out, const Tensor& w);

}  // namespace scalepart::reference
