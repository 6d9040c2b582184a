#include "reference_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scalepart/nn.hpp"

namespace scalepart::reference {

Mat::Mat(const Tensor& t) : rows(t.rows()), cols(t.cols()), v(t.values().begin(), t.values().end()) {}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Mat linear(const Mat& x, const Tensor& w, const Tensor& b) {
  const std::size_t out = w.cols();
  Mat y(x.rows, out);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double a = b[o];
      for (std::size_t i = 0; i < x.cols; ++i) a += x(r, i) * double(w(i, o));
      y(r, o) = a;
    }
  return y;
}

Mat layer_norm(const Mat& x, const Tensor& gain, const Tensor& bias) {
  Mat y(x.rows, x.cols);
  const double eps = double(nn::kLayerNormEps);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x(r, j);
    mean /= double(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) var += (x(r, j) - mean) * (x(r, j) - mean);
    var /= double(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j)
      y(r, j) = (x(r, j) - mean) / std::sqrt(var + eps) * double(gain[j]) + double(bias[j]);
  }
  return y;
}

Mat mha(const Mat& q_in, const Mat& k_in, const Mat& v_in, std::size_t heads, const Tensor& wq, const Tensor& bq,
        const Tensor& wk, const Tensor& bk, const Tensor& wv, const Tensor& bv, const Tensor& wo, const Tensor& bo) {
  const Mat q = linear(q_in, wq, bq), k = linear(k_in, wk, bk), v = linear(v_in, wv, bv);
  const std::size_t d = q.cols, dh = d / heads;
  Mat ctx(q.rows, d);
  std::vector<double> s(k.rows);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < q.rows; ++i) {
      double m = -INFINITY;
      for (std::size_t j = 0; j < k.rows; ++j) {
        double a = 0.0;
        for (std::size_t c = 0; c < dh; ++c) a += q(i, h * dh + c) * k(j, h * dh + c);
        s[j] = a / std::sqrt(double(dh));
        m = std::max(m, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - m));
      for (std::size_t c = 0; c < dh; ++c) {
        double a = 0.0;
        for (std::size_t j = 0; j < k.rows; ++j) a += s[j] / z * v(j, h * dh + c);
        ctx(i, h * dh + c) = a;
      }
    }
  return linear(ctx, wo, bo);
}

Mat ffn(const Mat& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  Mat h = linear(x, w1, b1);
  for (auto& e : h.v) e = gelu(e);
  return linear(h, w2, b2);
}

Mat film(const Mat& x, const Mat& e, const Tensor& ln_gain, const Tensor& ln_bias, const Tensor& w, const Tensor& b,
         double gate) {
  const Mat gb = linear(layer_norm(e, ln_gain, ln_bias), w, b);
  Mat y(x.rows, x.cols);
  for (std::size_t n = 0; n < x.rows; ++n)
    for (std::size_t j = 0; j < x.cols; ++j)
      y(n, j) = x(n, j) * (1.0 + gate * gb(0, j)) + gate * gb(0, x.cols + j);
  return y;
}

Mat scale_embed(double s, const Tensor& omega, const Tensor& phi) {
  Mat e(1, 2 * omega.size());
  for (std::size_t k = 0; k < omega.size(); ++k) {
    const double arg = double(omega[k]) * s + double(phi[k]);
    e(0, 2 * k) = std::sin(arg);
    e(0, 2 * k + 1) = std::cos(arg);
  }
  return e;
}

Mat mask_head(const Mat& h, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  Mat p = ffn(h, w1, b1, w2, b2);
  const double lo = nn::kProbClamp;
  for (auto& e : p.v) e = std::clamp(1.0 / (1.0 + std::exp(-e)), lo, 1.0 - lo);
  return p;
}

double weighted_sum(const Mat& out, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.v.size(); ++i) s += out.v[i] * double(w[i]);
  return s;
}

}  // namespace scalepart::reference
