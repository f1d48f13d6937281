#include <cmath>
#include <string>

#include "transfusor/diffusion.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::diffusion {
namespace {

// The output layer starts small so an untrained network predicts noise close
// to zero and the initial loss sits near the noise variance.
constexpr double kOutputInitScale = 0.1;

void shrink(nn::ParamList params, double factor) {
  for (auto& p : params)
    for (double& v : p.tensor.mutable_values()) v *= factor;
}

}  // namespace

void TransfusorConfig::validate() const {
  if (seq_len == 0 || hidden == 0 || heads == 0 || ff_dim == 0 || reduce_dim == 0)
    throw ConfigError("network widths must be positive");
  if (hidden % heads != 0)
    throw ConfigError("hidden width " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (hidden % 2 != 0) throw ConfigError("hidden width must be even for positional encoding");
  if (time_dim % 2 != 0 || time_dim == 0) throw ConfigError("time embedding width must be even");
  if (category_dim == 0) throw ConfigError("category embedding width must be positive");
}

TransfusorNet TransfusorNet::init(const TransfusorConfig& config, SeededRng& rng) {
  config.validate();
  TransfusorNet net;
  net.config_ = config;
  const std::size_t c = config.condition_dim();
  net.embed = nn::Linear::init(2, config.hidden, rng);
  net.categories = nn::CategoryTable::init(config.category_dim, rng);
  net.fuse = nn::ConditionLinear::init(config.hidden, c, config.hidden, rng);
  for (std::size_t i = 0; i < config.blocks; ++i)
    net.blocks.push_back(nn::TransformerBlock::init(config.hidden, config.heads, config.ff_dim, rng));
  net.reduce_hidden = nn::ConditionLinear::init(config.hidden, c, config.reduce_dim, rng);
  net.reduce_out = nn::ConditionLinear::init(config.reduce_dim, c, 2, rng);
  nn::ParamList out_params;
  net.reduce_out.value.collect(out_params, "value");
  net.reduce_out.condition.collect(out_params, "condition");
  shrink(out_params, kOutputInitScale);
  net.initialized_ = true;
  return net;
}

Tensor TransfusorNet::predict_noise(const Tensor& x, std::span<const std::size_t> steps,
                                    std::span<const std::size_t> ids) const {
  if (!initialized_) throw StateError("noise network has no parameters");
  if (x.rank() != 3 || x.dim(2) != 2)
    throw DimensionError("noise network expects [batch, positions, 2], got " +
                         shape_string(x.shape()));
  const std::size_t batch = x.dim(0);
  if (steps.size() != batch || ids.size() != batch)
    throw DimensionError("noise network: batch of " + std::to_string(batch) + " with " +
                         std::to_string(steps.size()) + " steps and " +
                         std::to_string(ids.size()) + " labels");
  const Tensor c = nn::build_condition_embedding(categories, ids, steps, config_.time_dim);
  Tensor h = add(embed(x), nn::positional_encoding(x.dim(1), config_.hidden));
  h = fuse(h, c);
  for (const auto& block : blocks) h = block(h);
  h = reduce_hidden(h, c);
  return reduce_out(h, c);
}

nn::ParamList TransfusorNet::parameters() const {
  nn::ParamList out;
  embed.collect(out, "embed");
  categories.collect(out, "categories");
  fuse.collect(out, "fuse");
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(out, "blocks." + std::to_string(i));
  reduce_hidden.collect(out, "reduce_hidden");
  reduce_out.collect(out, "reduce_out");
  return out;
}

Tensor training_loss(const TransfusorNet& net, const Tensor& x0,
                     std::span<const std::size_t> labels, const NoiseSchedule& schedule,
                     SeededRng& rng, double p_uncond) {
  if (!x0.defined() || x0.rank() != 3 || x0.dim(0) == 0) throw UsageError("training batch is empty");
  const std::size_t batch = x0.dim(0);
  if (labels.size() != batch) throw DimensionError("one label per training example required");
  if (!(p_uncond >= 0.0 && p_uncond < 1.0)) throw ConfigError("p_uncond must be in [0, 1)");

  std::vector<std::size_t> steps(batch), ids(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    steps[i] = 1 + static_cast<std::size_t>(rng.below(schedule.steps()));
    ids[i] = rng.uniform() < p_uncond ? nn::CategoryTable::kNullToken : labels[i];
  }
  const Tensor eps = randn(x0.shape(), rng);

  const std::size_t per = x0.size() / batch;
  std::vector<double> xk(x0.size());
  auto xv = x0.values();
  auto ev = eps.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const double ab = schedule.alpha_bar(steps[b]);
    const double s0 = std::sqrt(ab), s1 = std::sqrt(1.0 - ab);
    for (std::size_t j = b * per; j < (b + 1) * per; ++j) xk[j] = s0 * xv[j] + s1 * ev[j];
  }
  const Tensor pred = net.predict_noise(Tensor::from(x0.shape(), std::move(xk)), steps, ids);
  return mse_loss(pred, eps);
}

std::vector<double> train(TransfusorModel& model, const SequenceDataset& data,
                          const TrainingConfig& config, const EpochCallback& on_epoch) {
  if (!model.net.initialized()) throw StateError("noise network has no parameters");
  if (model.schedule.empty()) throw StateError("model has no noise schedule");
  if (data.seq_len != model.net.config().seq_len)
    throw ConfigError("dataset sequences have " + std::to_string(data.seq_len) +
                      " increments, network expects " +
                      std::to_string(model.net.config().seq_len));
  const TransfusorNet& net = model.net;
  const NoiseSchedule& schedule = model.schedule;
  const double p = config.p_uncond;
  return train_loop(
      data, net.parameters(), config,
      [&](const Tensor& x0, std::span<const std::size_t> labels, SeededRng& rng) {
        return training_loss(net, x0, labels, schedule, rng, p);
      },
      on_epoch);
}

}  // namespace transfusor::diffusion
