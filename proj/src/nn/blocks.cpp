#include <cmath>
#include <numeric>

#include "transfusor/errors.hpp"
#include "transfusor/nn.hpp"

namespace transfusor::nn {

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

Tensor xavier_uniform(std::size_t in, std::size_t out, SeededRng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> v(in * out);
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::from({in, out}, std::move(v), true);
}

Linear Linear::init(std::size_t in, std::size_t out, SeededRng& rng) {
  return Linear{xavier_uniform(in, out, rng), Tensor::zeros({out}, true)};
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---- attention ------------------------------------------------------------

Tensor attention_head(const Tensor& x, const AttentionHead& head, Tensor* scores) {
  const std::size_t d_k = head.w_q.dim(1);
  if (d_k == 0 || head.w_k.dim(1) != d_k)
    throw ConfigError("attention head needs matching nonzero d_k, got " +
                      shape_string(head.w_q.shape()) + " / " +
                      shape_string(head.w_k.shape()));
  Tensor q = matmul(x, head.w_q);
  Tensor k = matmul(x, head.w_k);
  Tensor v = matmul(x, head.w_v);
  if (x.rank() == 2) {  // treat as a batch of one
    q = reshape(q, {1, q.dim(0), q.dim(1)});
    k = reshape(k, {1, k.dim(0), k.dim(1)});
    v = reshape(v, {1, v.dim(0), v.dim(1)});
  }
  Tensor a = softmax(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_k))), -1);
  Tensor out = matmul(a, v);
  if (x.rank() == 2) {
    a = reshape(a, {a.dim(1), a.dim(2)});
    out = reshape(out, {out.dim(1), out.dim(2)});
  }
  if (scores) *scores = a;
  return out;
}

MultiHeadAttention MultiHeadAttention::init(std::size_t d_in, std::size_t d_out,
                                            std::size_t heads, SeededRng& rng) {
  if (heads == 0 || d_in % heads != 0)
    throw ConfigError("attention width " + std::to_string(d_in) +
                      " is not divisible into " + std::to_string(heads) + " heads");
  MultiHeadAttention m;
  m.heads_ = heads;
  m.d_k_ = m.d_v_ = d_in / heads;
  m.w_q = xavier_uniform(d_in, heads * m.d_k_, rng);
  m.w_k = xavier_uniform(d_in, heads * m.d_k_, rng);
  m.w_v = xavier_uniform(d_in, heads * m.d_v_, rng);
  m.w_out = xavier_uniform(heads * m.d_v_, d_out, rng);
  return m;
}

MultiHeadAttention MultiHeadAttention::from_heads(std::span<const AttentionHead> heads,
                                                  Tensor w_out) {
  if (heads.empty()) throw ConfigError("multi-head attention needs at least one head");
  MultiHeadAttention m;
  m.heads_ = heads.size();
  m.d_k_ = heads[0].w_q.dim(1);
  m.d_v_ = heads[0].w_v.dim(1);
  std::vector<Tensor> qs, ks, vs;
  for (const auto& h : heads) {
    if (h.w_q.dim(1) != m.d_k_ || h.w_k.dim(1) != m.d_k_ || h.w_v.dim(1) != m.d_v_)
      throw ConfigError("inconsistent head widths in multi-head attention");
    qs.push_back(h.w_q.detach());
    ks.push_back(h.w_k.detach());
    vs.push_back(h.w_v.detach());
  }
  NoGradGuard guard;
  m.w_q = concat(qs, 1).detach(true);
  m.w_k = concat(ks, 1).detach(true);
  m.w_v = concat(vs, 1).detach(true);
  m.w_out = w_out.detach(true);
  m.validate();
  return m;
}

void MultiHeadAttention::validate() const {
  if (heads_ == 0 || d_k_ == 0 || d_v_ == 0)
    throw ConfigError("multi-head attention needs heads, d_k, d_v >= 1");
  const std::size_t d_in = w_q.dim(0);
  if (w_q.shape() != Shape{d_in, heads_ * d_k_} || w_k.shape() != Shape{d_in, heads_ * d_k_} ||
      w_v.shape() != Shape{d_in, heads_ * d_v_})
    throw ConfigError("multi-head projections inconsistent with " +
                      std::to_string(heads_) + " heads");
  if (w_out.dim(0) != heads_ * d_v_)
    throw ConfigError("output projection expects " + std::to_string(w_out.dim(0)) +
                      " inputs but heads provide " + std::to_string(heads_ * d_v_));
}

Tensor MultiHeadAttention::operator()(const Tensor& x, Tensor* scores) const {
  validate();
  const bool unbatched = x.rank() == 2;
  const Tensor xb = unbatched ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  if (xb.rank() != 3 || xb.dim(2) != w_q.dim(0))
    throw ConfigError("attention input " + shape_string(x.shape()) + " does not match width " +
                      std::to_string(w_q.dim(0)));
  const std::size_t b = xb.dim(0), s = xb.dim(1);
  auto split = [&](const Tensor& t, std::size_t d) {
    return reshape(swap_axes12(reshape(t, {b, s, heads_, d})), {b * heads_, s, d});
  };
  Tensor q = split(matmul(xb, w_q), d_k_);
  Tensor k = split(matmul(xb, w_k), d_k_);
  Tensor v = split(matmul(xb, w_v), d_v_);
  Tensor a = softmax(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_k_))), -1);
  if (scores) *scores = a;
  Tensor heads = matmul(a, v);  // [b*h, s, d_v]
  Tensor merged = reshape(swap_axes12(reshape(heads, {b, heads_, s, d_v_})),
                          {b, s, heads_ * d_v_});
  Tensor out = matmul(merged, w_out);
  return unbatched ? reshape(out, {s, out.dim(2)}) : out;
}

AttentionHead MultiHeadAttention::head(std::size_t i) const {
  if (i >= heads_) throw UsageError("head index out of range");
  auto columns = [](const Tensor& w, std::size_t start, std::size_t width) {
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    std::vector<double> v(rows * width);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) v[r * width + c] = w[r * cols + start + c];
    return Tensor::from({rows, width}, std::move(v));
  };
  return AttentionHead{columns(w_q, i * d_k_, d_k_), columns(w_k, i * d_k_, d_k_),
                       columns(w_v, i * d_v_, d_v_)};
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".w_q", w_q});
  out.push_back({prefix + ".w_k", w_k});
  out.push_back({prefix + ".w_v", w_v});
  out.push_back({prefix + ".w_out", w_out});
}

// ---- transformer block ----------------------------------------------------

TransformerBlock TransformerBlock::init(std::size_t hidden, std::size_t heads,
                                        std::size_t ff_dim, SeededRng& rng) {
  TransformerBlock b;
  b.attention = MultiHeadAttention::init(hidden, hidden, heads, rng);
  b.ln1_gain = Tensor::full({hidden}, 1.0, true);
  b.ln1_bias = Tensor::zeros({hidden}, true);
  b.ln2_gain = Tensor::full({hidden}, 1.0, true);
  b.ln2_bias = Tensor::zeros({hidden}, true);
  b.ff_in = Linear::init(hidden, ff_dim, rng);
  b.ff_out = Linear::init(ff_dim, hidden, rng);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  if (x.shape().back() != width())
    throw ConfigError("transformer block of width " + std::to_string(width()) +
                      " got input " + shape_string(x.shape()));
  Tensor h = layer_norm(add(x, attention(x)), ln1_gain, ln1_bias);
  return layer_norm(add(h, ff_out(gelu(ff_in(h)))), ln2_gain, ln2_bias);
}

void TransformerBlock::collect(ParamList& out, const std::string& prefix) const {
  attention.collect(out, prefix + ".attn");
  out.push_back({prefix + ".ln1.gain", ln1_gain});
  out.push_back({prefix + ".ln1.bias", ln1_bias});
  ff_in.collect(out, prefix + ".ff_in");
  ff_out.collect(out, prefix + ".ff_out");
  out.push_back({prefix + ".ln2.gain", ln2_gain});
  out.push_back({prefix + ".ln2.bias", ln2_bias});
}

// ---- encodings ------------------------------------------------------------

std::vector<double> sinusoidal_encode(std::size_t k, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0)
    throw ConfigError("sinusoidal encoding needs an even width, got " + std::to_string(dim));
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq =
        std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
    const double angle = static_cast<double>(k) / freq;
    out[2 * i] = std::sin(angle);
    out[2 * i + 1] = std::cos(angle);
  }
  return out;
}

Tensor positional_encoding(std::size_t positions, std::size_t dim) {
  std::vector<double> v;
  v.reserve(positions * dim);
  for (std::size_t p = 0; p < positions; ++p) {
    auto row = sinusoidal_encode(p, dim);
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor::from({positions, dim}, std::move(v));
}

CategoryTable CategoryTable::init(std::size_t dim, SeededRng& rng) {
  std::vector<double> v((kCategoryCount + 1) * dim);
  for (double& x : v) x = 0.02 * rng.normal();
  return CategoryTable{Tensor::from({kCategoryCount + 1, dim}, std::move(v), true)};
}

Tensor CategoryTable::lookup(std::span<const std::size_t> ids) const {
  for (std::size_t id : ids)
    if (id > kNullToken)
      throw LabelError("category id " + std::to_string(id) + " is not 0..11 or the null token");
  return gather_rows(table, ids);
}

void CategoryTable::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".table", table});
}

std::size_t category_id(const std::optional<ConditionLabel>& label) {
  return label ? label->index() : CategoryTable::kNullToken;
}

Tensor build_condition_embedding(const CategoryTable& categories,
                                 std::span<const std::size_t> ids,
                                 std::span<const std::size_t> steps, std::size_t time_dim) {
  if (!steps.empty() && steps.size() != ids.size())
    throw UsageError("condition embedding: " + std::to_string(ids.size()) + " labels but " +
                     std::to_string(steps.size()) + " steps");
  Tensor cat = categories.lookup(ids);
  std::vector<double> t(ids.size() * time_dim, 0.0);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto enc = sinusoidal_encode(steps[i], time_dim);
    std::copy(enc.begin(), enc.end(), t.begin() + static_cast<long>(i * time_dim));
  }
  return concat({cat, Tensor::from({ids.size(), time_dim}, std::move(t))}, 1);
}

Tensor build_condition_embedding(const CategoryTable& categories,
                                 const std::optional<ConditionLabel>& label,
                                 std::size_t step, std::size_t time_dim) {
  const std::size_t id = category_id(label);
  return build_condition_embedding(categories, std::span<const std::size_t>(&id, 1),
                                   std::span<const std::size_t>(&step, 1), time_dim);
}

// ---- condition-induced linear layer ---------------------------------------

ConditionLinear ConditionLinear::init(std::size_t in, std::size_t cond_dim,
                                      std::size_t out, SeededRng& rng) {
  ConditionLinear l;
  l.value = Linear::init(in, out, rng);
  l.gate = Linear::init(in, out, rng);
  l.condition = Linear::init(cond_dim, out, rng);
  return l;
}

Tensor ConditionLinear::operator()(const Tensor& x, const Tensor& c) const {
  if (x.rank() != 3 || x.dim(2) != value.in_features() || gate.in_features() != x.dim(2))
    throw ConfigError("condition linear expects [B, S, " +
                      std::to_string(value.in_features()) + "], got " +
                      shape_string(x.shape()));
  if (c.rank() != 2 || c.dim(0) != x.dim(0) || c.dim(1) != condition.in_features())
    throw ConfigError("condition linear expects condition [" + std::to_string(x.dim(0)) +
                      ", " + std::to_string(condition.in_features()) + "], got " +
                      shape_string(c.shape()));
  if (value.out_features() != gate.out_features() ||
      value.out_features() != condition.out_features())
    throw ConfigError("condition linear paths disagree on output width");
  Tensor fused = mul(value(x), sigmoid(gate(x)));
  return add(fused, repeat_positions(condition(c), x.dim(1)));
}

void ConditionLinear::collect(ParamList& out, const std::string& prefix) const {
  value.collect(out, prefix + ".value");
  gate.collect(out, prefix + ".gate");
  condition.collect(out, prefix + ".condition");
}

}  // namespace transfusor::nn
