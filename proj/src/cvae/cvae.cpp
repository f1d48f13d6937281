#include <string>

#include "transfusor/cvae.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::cvae {

void CvaeConfig::validate() const {
  if (seq_len == 0 || hidden == 0 || heads == 0 || ff_dim == 0 || category_dim == 0)
    throw ConfigError("CVAE widths must be positive");
  if (latent == 0) throw ConfigError("CVAE latent width must be >= 1");
  if (!(kl_weight > 0.0)) throw ConfigError("CVAE KL weight must be positive");
  if (hidden % heads != 0)
    throw ConfigError("hidden width " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (hidden % 2 != 0 || time_dim % 2 != 0)
    throw ConfigError("hidden and time widths must be even");
}

Cvae Cvae::init(const CvaeConfig& config, SeededRng& rng) {
  config.validate();
  Cvae m;
  m.config_ = config;
  const std::size_t c = config.condition_dim();
  m.categories = nn::CategoryTable::init(config.category_dim, rng);
  m.enc_embed = nn::Linear::init(2, config.hidden, rng);
  m.enc_fuse = nn::ConditionLinear::init(config.hidden, c, config.hidden, rng);
  for (std::size_t i = 0; i < config.encoder_blocks; ++i)
    m.enc_blocks.push_back(nn::TransformerBlock::init(config.hidden, config.heads, config.ff_dim, rng));
  m.enc_mean = nn::Linear::init(config.hidden, config.latent, rng);
  m.enc_log_var = nn::Linear::init(config.hidden, config.latent, rng);
  m.dec_embed = nn::Linear::init(config.latent, config.hidden, rng);
  m.dec_fuse = nn::ConditionLinear::init(config.hidden, c, config.hidden, rng);
  for (std::size_t i = 0; i < config.decoder_blocks; ++i)
    m.dec_blocks.push_back(nn::TransformerBlock::init(config.hidden, config.heads, config.ff_dim, rng));
  m.dec_out = nn::Linear::init(config.hidden, 2, rng);
  m.initialized_ = true;
  return m;
}

Tensor Cvae::condition(std::span<const std::size_t> ids) const {
  return nn::build_condition_embedding(categories, ids, {}, config_.time_dim);
}

Posterior Cvae::encode(const Tensor& x, std::span<const std::size_t> ids) const {
  if (!initialized_) throw StateError("CVAE has no parameters");
  if (x.rank() != 3 || x.dim(1) != config_.seq_len || x.dim(2) != 2)
    throw ConfigError("CVAE encoder expects [batch, " + std::to_string(config_.seq_len) +
                      ", 2], got " + shape_string(x.shape()));
  if (ids.size() != x.dim(0)) throw ConfigError("CVAE encoder needs one label per example");
  Tensor h = add(enc_embed(x), nn::positional_encoding(config_.seq_len, config_.hidden));
  h = enc_fuse(h, condition(ids));
  for (const auto& block : enc_blocks) h = block(h);
  const Tensor pooled = mean_positions(h);
  return {enc_mean(pooled), enc_log_var(pooled)};
}

Tensor Cvae::decode(const Tensor& z, std::span<const std::size_t> ids) const {
  if (!initialized_) throw StateError("CVAE has no parameters");
  if (z.rank() != 2 || z.dim(1) != config_.latent)
    throw ConfigError("CVAE decoder expects [batch, " + std::to_string(config_.latent) +
                      "], got " + shape_string(z.shape()));
  if (ids.size() != z.dim(0)) throw ConfigError("CVAE decoder needs one label per example");
  Tensor h = repeat_positions(dec_embed(z), config_.seq_len);
  h = add(h, nn::positional_encoding(config_.seq_len, config_.hidden));
  h = dec_fuse(h, condition(ids));
  for (const auto& block : dec_blocks) h = block(h);
  return dec_out(h);
}

nn::ParamList Cvae::parameters() const {
  nn::ParamList out;
  categories.collect(out, "categories");
  enc_embed.collect(out, "encoder.embed");
  enc_fuse.collect(out, "encoder.fuse");
  for (std::size_t i = 0; i < enc_blocks.size(); ++i)
    enc_blocks[i].collect(out, "encoder.block" + std::to_string(i));
  enc_mean.collect(out, "encoder.mean");
  enc_log_var.collect(out, "encoder.log_var");
  dec_embed.collect(out, "decoder.embed");
  dec_fuse.collect(out, "decoder.fuse");
  for (std::size_t i = 0; i < dec_blocks.size(); ++i)
    dec_blocks[i].collect(out, "decoder.block" + std::to_string(i));
  dec_out.collect(out, "decoder.out");
  return out;
}

Tensor reparameterize(const Posterior& q, const Tensor& eps) {
  if (eps.shape() != q.mean.shape())
    throw DimensionError("latent noise " + shape_string(eps.shape()) + " vs posterior " +
                         shape_string(q.mean.shape()));
  return add(q.mean, mul(exp(scale(q.log_var, 0.5)), eps));
}

Tensor kl_divergence(const Posterior& q) {
  const Tensor terms =
      sub(add(mul(q.mean, q.mean), exp(q.log_var)), add_scalar(q.log_var, 1.0));
  return scale(sum(terms), 0.5 / static_cast<double>(q.mean.dim(0)));
}

LossParts cvae_loss(const Cvae& model, const Tensor& x0, std::span<const std::size_t> labels,
                    SeededRng& rng, const Tensor* eps) {
  if (!x0.defined() || x0.rank() != 3 || x0.dim(0) == 0) throw UsageError("training batch is empty");
  const Posterior q = model.encode(x0, labels);
  const Tensor noise = eps ? *eps : randn(q.mean.shape(), rng);
  const Tensor recon = model.decode(reparameterize(q, noise), labels);
  LossParts parts;
  parts.reconstruction = mse_loss(recon, x0);
  parts.kl = kl_divergence(q);
  parts.total = add(parts.reconstruction, scale(parts.kl, model.config().kl_weight));
  return parts;
}

std::vector<DeltaTrajectory> sample(const CvaeModel& model, const ConditionLabel& label,
                                    std::size_t n, SeededRng& rng) {
  if (!model.net.initialized()) throw StateError("CVAE has no parameters");
  if (!model.stats) throw StateError("CVAE model has no normalization statistics");
  if (n == 0) return {};
  NoGradGuard no_grad;
  const std::vector<std::size_t> ids(n, label.index());
  const Tensor x = model.net.decode(randn({n, model.net.config().latent}, rng), ids);
  const std::size_t per = x.size() / n;
  std::vector<DeltaTrajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(model.stats->denormalize(x.values().subspan(i * per, per)));
  return out;
}

std::vector<double> train(CvaeModel& model, const SequenceDataset& data,
                          const TrainingConfig& config, const EpochCallback& on_epoch) {
  if (!model.net.initialized()) throw StateError("CVAE has no parameters");
  if (data.seq_len != model.net.config().seq_len)
    throw ConfigError("dataset sequences have " + std::to_string(data.seq_len) +
                      " increments, CVAE expects " + std::to_string(model.net.config().seq_len));
  const Cvae& net = model.net;
  return train_loop(
      data, net.parameters(), config,
      [&net](const Tensor& x0, std::span<const std::size_t> labels, SeededRng& rng) {
        return cvae_loss(net, x0, labels, rng).total;
      },
      on_epoch);
}

}  // namespace transfusor::cvae
