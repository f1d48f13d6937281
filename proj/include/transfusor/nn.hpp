#pragma once
// Neural building blocks shared by the diffusion network and the CVAE.
//
// Sequence tensors are [batch, positions, features]. Affine weights are stored
// [in, out] so a layer computes x * W + b on the last axis.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transfusor/labels.hpp"
#include "transfusor/rng.hpp"
#include "transfusor/tensor.hpp"

namespace transfusor::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::vector<Tensor> tensors_of(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

// Glorot/Xavier uniform in [-a, a], a = sqrt(6 / (in + out)).
Tensor xavier_uniform(std::size_t in, std::size_t out, SeededRng& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, SeededRng& rng);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix) const;
};

// Projections of one self-attention head.
struct AttentionHead {
  Tensor w_q;  // [d_in, d_k]
  Tensor w_k;  // [d_in, d_k]
  Tensor w_v;  // [d_in, d_v]
};

// softmax(Q K^T / sqrt(d_k)) V for x of shape [s, d_in] or [B, s, d_in].
// When `scores` is given it receives the attention matrix ([.., s, s]).
Tensor attention_head(const Tensor& x, const AttentionHead& head,
                      Tensor* scores = nullptr);

// Heads are stored packed: columns [i*d_k, (i+1)*d_k) of w_q/w_k belong to
// head i, likewise for w_v with d_v. The concatenated head outputs are
// projected by w_out [heads*d_v, d_out].
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  static MultiHeadAttention init(std::size_t d_in, std::size_t d_out, std::size_t heads,
                                 SeededRng& rng);
  static MultiHeadAttention from_heads(std::span<const AttentionHead> heads,
                                       Tensor w_out);

  // [B, s, d_in] (or [s, d_in]) -> same leading shape with d_out features.
  // `scores` receives [B * heads, s, s].
  Tensor operator()(const Tensor& x, Tensor* scores = nullptr) const;

  // Copy of head i's projections, detached from the packed storage.
  AttentionHead head(std::size_t i) const;

  std::size_t heads() const { return heads_; }
  std::size_t d_k() const { return d_k_; }
  std::size_t d_v() const { return d_v_; }
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor w_q, w_k, w_v, w_out;

 private:
  void validate() const;
  std::size_t heads_ = 0, d_k_ = 0, d_v_ = 0;
};

// Post-norm block: X' = LN(X + MSA(X)); Y = LN(X' + FF(X')),
// FF = linear -> GELU -> linear.
struct TransformerBlock {
  MultiHeadAttention attention;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Linear ff_in, ff_out;

  static TransformerBlock init(std::size_t hidden, std::size_t heads, std::size_t ff_dim,
                               SeededRng& rng);
  std::size_t width() const { return ln1_gain.dim(0); }
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// entry 2i = sin(k / 10000^(2i/dim)), entry 2i+1 = cos(same); dim must be even.
std::vector<double> sinusoidal_encode(std::size_t k, std::size_t dim);

// [positions, dim] table of sinusoidal encodings of the sequence index.
Tensor positional_encoding(std::size_t positions, std::size_t dim);

// Learnable category embedding with one extra row for the null (unconditional)
// token used by classifier-free guidance.
struct CategoryTable {
  static constexpr std::size_t kNullToken = kCategoryCount;
  Tensor table;  // [13, dim]

  static CategoryTable init(std::size_t dim, SeededRng& rng);
  std::size_t dim() const { return table.dim(1); }
  // ids in 0..12; 12 is the null token.
  Tensor lookup(std::span<const std::size_t> ids) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Category row id for an optional label (nullopt -> null token).
std::size_t category_id(const std::optional<ConditionLabel>& label);

// concat(category embedding, sinusoidal(step)) per batch entry -> [B, cat + time].
// With `steps` empty the time half is zero (the CVAE has no diffusion clock).
Tensor build_condition_embedding(const CategoryTable& categories,
                                 std::span<const std::size_t> ids,
                                 std::span<const std::size_t> steps, std::size_t time_dim);
Tensor build_condition_embedding(const CategoryTable& categories,
                                 const std::optional<ConditionLabel>& label,
                                 std::size_t step, std::size_t time_dim);

// f(x, c) = (x W1 + b1) * sigmoid(x W2 + b2) + (c W3 + b3); the condition term
// is computed once per batch entry and shared across positions.
struct ConditionLinear {
  Linear value;      // W1, b1
  Linear gate;       // W2, b2
  Linear condition;  // W3, b3

  static ConditionLinear init(std::size_t in, std::size_t cond_dim, std::size_t out,
                              SeededRng& rng);
  std::size_t in_features() const { return value.in_features(); }
  std::size_t out_features() const { return value.out_features(); }
  // x: [B, S, in], c: [B, cond_dim] -> [B, S, out]
  Tensor operator()(const Tensor& x, const Tensor& c) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace transfusor::nn
