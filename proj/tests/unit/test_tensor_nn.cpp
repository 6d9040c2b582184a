#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "scalepart/checkpoint.hpp"
#include "scalepart/error.hpp"
#include "scalepart/nn.hpp"
#include "scalepart/optim.hpp"
#include "scalepart/tensor.hpp"

namespace scalepart {
namespace {

using namespace nn;

Tensor random(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Row-major product in binary64, rounded once.
Tensor naive(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows(), k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += double(ta ? a(p, i) : a(i, p)) * double(tb ? b(j, p) : b(p, j));
      c(i, j) = float(s);
    }
  return c;
}

void expect_close(const Tensor& x, const Tensor& y, double tol) {
  ASSERT_EQ(x.shape(), y.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], tol) << "at " << i;
}

TEST(Tensor, GemmVariantsMatchNaive) {
  const Tensor a = random(7, 5, 1), b = random(5, 9, 2), bt = random(9, 5, 3), at = random(5, 7, 4);
  Tensor c;
  matmul(a, b, c);
  expect_close(c, naive(a, b, false, false), 1e-6);
  matmul_nt(a, bt, c);
  expect_close(c, naive(a, bt, false, true), 1e-6);
  matmul_tn(at, b, c);
  expect_close(c, naive(at, b, true, false), 1e-6);
}

TEST(Tensor, GemmAccumulates) {
  const Tensor a = random(4, 3, 5), b = random(3, 6, 6);
  Tensor c = random(4, 6, 7);
  const Tensor before = c, product = naive(a, b, false, false);
  matmul(a, b, c, true);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], before[i] + product[i], 1e-6);
}

TEST(Tensor, GatherScatterAreAdjoint) {
  const Tensor a = random(6, 4, 8);
  const std::vector<std::size_t> rows{4, 1, 4};
  const Tensor g = gather_rows(a, rows);
  EXPECT_EQ(g.rows(), 3u);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(g(0, c), a(4, c));
  Tensor dst = Tensor::matrix(6, 4);
  scatter_add_rows(g, rows, dst);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_FLOAT_EQ(dst(4, c), 2 * a(4, c));
  EXPECT_EQ(transpose(transpose(a)), a);
}

TEST(Nn, SoftmaxRowsSumToOne) {
  Tensor x = random(5, 8, 9);
  scale_inplace(x, 30.0f);
  softmax_rows(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (float v : x.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Nn, LayerNormLeavesNormalizedRowUnchanged) {
  // Mean 0 and variance 1 over 4 entries.
  const Tensor x({1, 4}, std::vector<float>{1.0f, -1.0f, 1.0f, -1.0f});
  const Tensor y = layer_norm_forward(x, Tensor::vector(4, 1.0f), Tensor::vector(4), nullptr);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(Nn, SigmoidClamp) {
  EXPECT_FLOAT_EQ(sigmoid(100.0f), 1.0f - kProbClamp);
  EXPECT_FLOAT_EQ(sigmoid(-100.0f), kProbClamp);
  EXPECT_FLOAT_EQ(sigmoid(0.0f), 0.5f);
}

TEST(Nn, SingleKeyAttentionIsValueProjection) {
  Rng rng(3);
  nn::ParameterStore store;
  nn::MultiHeadAttention attn(store, "a", 8, 2, rng);
  const Tensor q = random(3, 8, 10), kv = random(1, 8, 11);
  const Tensor out = attn.forward(q, kv, kv, nullptr);
  const Tensor expected = attn.output().forward(attn.value().forward(kv));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out(r, c), expected(0, c), 1e-6);
}

TEST(Optim, AdamWConvergesOnQuadratic) {
  nn::ParameterStore store;
  auto& w = store.add("w", Tensor({2}, std::vector<float>{3.0f, -2.0f}));
  const float target[2] = {0.5f, 1.5f};
  nn::AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  for (int step = 0; step < 2000; ++step) {
    // f(w) = 0.5 |w - target|^2 with a 4x stiffer second coordinate.
    w.grad[0] = w.value[0] - target[0];
    w.grad[1] = 4.0f * (w.value[1] - target[1]);
    nn::adamw_step(store, cfg);
  }
  EXPECT_NEAR(w.value[0], target[0], 1e-3);
  EXPECT_NEAR(w.value[1], target[1], 1e-3);
  EXPECT_EQ(store.step_count(), 2000u);
}

TEST(Optim, DescentDirectionAndZeroLearningRate) {
  nn::ParameterStore store;
  auto& w = store.add("w", Tensor({1}, std::vector<float>{1.0f}));
  w.grad[0] = 1.0f;
  nn::adamw_step(store, {.lr = 0.1, .weight_decay = 0.0});
  EXPECT_LT(w.value[0], 1.0f);
  const float before = w.value[0];
  w.grad[0] = 1.0f;
  nn::adamw_step(store, {.lr = 0.0});
  EXPECT_EQ(w.value[0], before);
}

TEST(Optim, NonFiniteGradientLeavesParametersUntouched) {
  nn::ParameterStore store;
  auto& a = store.add("a", Tensor({2}, std::vector<float>{1.0f, 2.0f}));
  auto& b = store.add("b", Tensor({1}, std::vector<float>{3.0f}));
  a.grad[0] = 1.0f;
  b.grad[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(nn::adamw_step(store, {}), DivergenceError);
  EXPECT_EQ(a.value[0], 1.0f);
  EXPECT_EQ(b.value[0], 3.0f);
}

TEST(Checkpoint, RoundTripAndErrors) {
  std::vector<NamedTensor> t{{"x.weight", random(3, 4, 12)}, {"y", Tensor({2, 1, 3}, 0.25f)}};
  const auto bytes = encode_checkpoint(t);
  const auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "x.weight");
  EXPECT_EQ(back[0].tensor, t[0].tensor);
  EXPECT_EQ(back[1].tensor.shape(), (std::vector<std::size_t>{2, 1, 3}));

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_checkpoint(version), FormatError);
  EXPECT_THROW(decode_checkpoint({bytes.begin(), bytes.end() - 3}), FormatError);
}

TEST(Checkpoint, ImportRejectsMissingOrMisshapen) {
  Rng rng(1);
  nn::ParameterStore store;
  nn::Linear lin(store, "lin", 3, 2, rng);
  auto exported = export_parameters(store, "m.");
  ASSERT_NE(find_tensor(exported, "m.lin.weight"), nullptr);
  nn::ParameterStore other;
  nn::Linear copy(other, "lin", 3, 2, rng);
  import_parameters(other, exported, "m.");
  EXPECT_EQ(copy.weight().value, lin.weight().value);
  exported[0].tensor = Tensor::matrix(2, 2);
  EXPECT_THROW(import_parameters(other, exported, "m."), FormatError);
  exported.pop_back();
  EXPECT_THROW(import_parameters(other, exported, "m."), FormatError);
}

}  // namespace
}  // namespace scalepart
