#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "scalepart/geometry.hpp"
#include "scalepart/nn.hpp"

namespace scalepart {

struct DecoderConfig {
  std::size_t dim = 96;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 192;
  std::size_t scale_pairs = 64;
  std::size_t modulator_layers = 2;
  std::size_t cross_layers = 4;
  // Points whose features serve as self-attention keys in the modulator; all points when N is smaller.
  std::size_t anchor_count = 256;
  float film_gate_init = 0.1f;
};

// Per axis, dim / 6 (sin, cos) pairs at frequencies geometrically spaced from 1 to 64 rad per unit,
// laid out [x block | y block | z block] with each block interleaved sin, cos. Throws
// ValidationError unless dim is a positive multiple of 6.
Tensor positional_encoding(const PointSet& points, std::size_t dim);
std::vector<double> positional_frequencies(std::size_t dim);

// Keys for the modulator self-attention: the `count` points with the smallest coordinate hash,
// ordered by (hash, index). Depends only on coordinates, so it commutes with point permutations.
std::vector<std::size_t> select_anchors(const PointSet& points, std::size_t count);

// Clamps a scale prompt into [0, 1]; `clamped` reports whether it moved.
float clamp_scale(float s, bool* clamped = nullptr);

// Returns no scale with probability p_drop, otherwise s.
std::optional<float> scale_dropout(std::optional<float> s, double p_drop, Rng& rng);

// e(s) = [sin(w_k s + phi_k), cos(w_k s + phi_k)] for k < M, interleaved.
class ScaleEmbedding {
 public:
  ScaleEmbedding() = default;
  ScaleEmbedding(nn::ParameterStore& store, const std::string& name, std::size_t pairs);

  Tensor forward(float s) const;  // 1 x 2M
  void backward(float s, const Tensor& de);

  nn::Param& frequencies() { return *omega_; }
  nn::Param& phases() { return *phi_; }
  std::size_t pairs() const { return omega_->value.size(); }

 private:
  nn::Param* omega_ = nullptr;
  nn::Param* phi_ = nullptr;
};

// X * (1 + a g) + a b, with [g, b] = Linear(LayerNorm(e)). The projection starts at zero.
class FilmLayer {
 public:
  struct Cache {
    Tensor x;
    nn::LayerNormCache norm;
    Tensor e_norm;  // 1 x 2M
    Tensor gb;      // 1 x 2D
  };

  FilmLayer() = default;
  FilmLayer(nn::ParameterStore& store, const std::string& name, std::size_t dim, std::size_t embed_dim,
            float gate_init);

  // `e` null means no scale: X is returned unchanged and nothing is cached.
  Tensor forward(const Tensor& x, const Tensor* e, Cache* cache) const;
  // Returns dL/dX; adds dL/de into `de` when non-null.
  Tensor backward(const Cache& cache, const Tensor& dy, Tensor* de);

  nn::LayerNorm& norm() { return norm_; }
  nn::Linear& projection() { return proj_; }
  nn::Param& gate() { return *gate_; }

 private:
  std::size_t dim_ = 0;
  nn::LayerNorm norm_;
  nn::Linear proj_;
  nn::Param* gate_ = nullptr;
};

// Pre-norm block: Y = X + Attn(LN1(X) -> LN1(X)[anchors]); out = Y + FFN(LN2(Y)).
class TransformerBlock {
 public:
  struct Cache {
    nn::LayerNormCache ln1, ln2;
    Tensor x_norm, keys, y, y_norm;
    nn::MultiHeadAttention::Cache attn;
    nn::FeedForward::Cache ffn;
  };

  TransformerBlock() = default;
  TransformerBlock(nn::ParameterStore& store, const std::string& name, const DecoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, std::span<const std::size_t> anchors, Cache* cache) const;
  Tensor backward(const Cache& cache, std::span<const std::size_t> anchors, const Tensor& dy);

  nn::MultiHeadAttention& attention() { return attn_; }
  nn::FeedForward& ffn() { return ffn_; }

 private:
  nn::LayerNorm ln1_, ln2_;
  nn::MultiHeadAttention attn_;
  nn::FeedForward ffn_;
};

// One prompt/point exchange:
//   q' = q + Attn(LN(q) -> LN(Y))
//   Z  = Y + Attn(LN(Y) -> LN(q'))
//   Y' = Z + FFN(LN(Z))
class CrossLayer {
 public:
  struct Cache {
    Tensor q, y;
    nn::LayerNormCache lq1, ly1, ly2, lq2, lf;
    Tensor q1n, y1n, y2n, q2n, z, zn;
    Tensor q_out;
    nn::MultiHeadAttention::Cache to_points, to_prompt;
    nn::FeedForward::Cache ffn;
  };

  CrossLayer() = default;
  CrossLayer(nn::ParameterStore& store, const std::string& name, const DecoderConfig& cfg, Rng& rng);

  // Returns (q', Y').
  std::pair<Tensor, Tensor> forward(const Tensor& q, const Tensor& y, Cache* cache) const;
  // Returns (dq, dY).
  std::pair<Tensor, Tensor> backward(const Cache& cache, const Tensor& dq_out, const Tensor& dy_out);

  nn::MultiHeadAttention& prompt_to_points() { return to_points_; }
  nn::MultiHeadAttention& points_to_prompt() { return to_prompt_; }
  nn::FeedForward& ffn() { return ffn_; }

 private:
  nn::LayerNorm lq1_, ly1_, ly2_, lq2_, lf_;
  nn::MultiHeadAttention to_points_, to_prompt_;
  nn::FeedForward ffn_;
};

// D -> D/2 -> 1 with GELU, then the clamped logistic function.
class MaskHead {
 public:
  struct Cache {
    Tensor h, pre, act, prob;
  };

  MaskHead() = default;
  MaskHead(nn::ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng);

  Tensor forward(const Tensor& h, Cache* cache) const;  // N x 1 probabilities
  Tensor backward(const Cache& cache, const Tensor& dprob);

  nn::Linear& first() { return fc1_; }
  nn::Linear& second() { return fc2_; }

 private:
  nn::Linear fc1_, fc2_;
};

class Decoder {
 public:
  struct Tape {
    std::vector<std::size_t> anchors;
    std::optional<float> scale;
    Tensor embedding;  // 1 x 2M when a scale is present
    std::vector<FilmLayer::Cache> film;
    std::vector<TransformerBlock::Cache> blocks;
    std::size_t prompt = 0;
    std::vector<CrossLayer::Cache> cross;
    MaskHead::Cache head;
  };

  explicit Decoder(const DecoderConfig& cfg = {}, std::uint64_t seed = 0);

  // X0 = F + PE(P).
  Tensor input_features(const Tensor& features, const PointSet& points) const;
  // Scale-modulated features: X <- Block_l(FiLM_l(X; s)). `anchors` index the key rows.
  Tensor modulate(const Tensor& x0, std::span<const std::size_t> anchors, std::optional<float> scale,
                  Tape* tape = nullptr) const;
  // Bidirectional exchange with the prompt row; returns H.
  Tensor exchange(const Tensor& modulated, std::size_t prompt, Tape* tape = nullptr) const;
  // N x 1 probabilities.
  Tensor head(const Tensor& h, Tape* tape = nullptr) const;

  // Full pass from encoder features. Scales outside [0, 1] are clamped.
  Tensor forward(const Tensor& features, const PointSet& points, std::size_t prompt, std::optional<float> scale,
                 Tape* tape = nullptr) const;
  // Accumulates parameter gradients and returns dL/dX0 (equal to dL/dF).
  Tensor backward(const Tape& tape, const Tensor& dprob);
  // Partial backward passes mirroring the forward stages.
  Tensor backward_head(const Tape& tape, const Tensor& dprob);
  Tensor backward_exchange(const Tape& tape, const Tensor& dh);
  Tensor backward_modulate(const Tape& tape, const Tensor& dmod);

  nn::ParameterStore& parameters() { return *store_; }
  const nn::ParameterStore& parameters() const { return *store_; }
  const DecoderConfig& config() const { return cfg_; }

  ScaleEmbedding& embedding() { return embed_; }
  FilmLayer& film(std::size_t i) { return film_.at(i); }
  TransformerBlock& block(std::size_t i) { return blocks_.at(i); }
  CrossLayer& cross(std::size_t i) { return cross_.at(i); }
  MaskHead& mask_head() { return head_; }

 private:
  DecoderConfig cfg_;
  std::unique_ptr<nn::ParameterStore> store_;
  ScaleEmbedding embed_;
  std::vector<FilmLayer> film_;
  std::vector<TransformerBlock> blocks_;
  std::vector<CrossLayer> cross_;
  MaskHead head_;
};

}  // namespace scalepart
