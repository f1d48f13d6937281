#include "transfusor/training.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "transfusor/errors.hpp"
#include "transfusor/optim.hpp"

namespace transfusor {

void SequenceDataset::add(std::span<const double> flat, std::size_t label) {
  if (seq_len == 0) seq_len = flat.size() / 2;
  if (flat.size() != seq_len * 2)
    throw DimensionError("sequence of " + std::to_string(flat.size() / 2) +
                         " increments does not match dataset length " + std::to_string(seq_len));
  if (label >= kCategoryCount) throw LabelError("category index " + std::to_string(label));
  values.insert(values.end(), flat.begin(), flat.end());
  labels.push_back(label);
}

Tensor SequenceDataset::batch(std::span<const std::size_t> idx) const {
  if (idx.empty()) throw UsageError("empty batch");
  std::vector<double> out;
  out.reserve(idx.size() * seq_len * 2);
  for (std::size_t i : idx) {
    if (i >= size()) throw UsageError("example index out of range");
    auto first = values.begin() + static_cast<std::ptrdiff_t>(i * seq_len * 2);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(seq_len * 2));
  }
  return Tensor::from({idx.size(), seq_len, 2}, std::move(out));
}

std::vector<std::size_t> SequenceDataset::batch_labels(std::span<const std::size_t> idx) const {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels.at(i));
  return out;
}

SequenceDataset make_dataset(std::span<const DeltaTrajectory> deltas,
                             std::span<const ConditionLabel> labels,
                             const NormalizationStats& stats) {
  if (deltas.size() != labels.size())
    throw UsageError("trajectory and label counts differ");
  SequenceDataset ds;
  for (std::size_t i = 0; i < deltas.size(); ++i) ds.add(stats.normalize(deltas[i]), labels[i].index());
  return ds;
}

void TrainingConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be positive");
  if (!(p_uncond >= 0.0 && p_uncond < 1.0)) throw ConfigError("p_uncond must be in [0, 1)");
}

std::vector<double> train_loop(const SequenceDataset& data, const nn::ParamList& params,
                               const TrainingConfig& config, const BatchLoss& loss,
                               const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw UsageError("training set is empty");
  Adam adam(nn::tensors_of(params), AdamOptions{.learning_rate = config.learning_rate});
  SeededRng base(config.seed);
  SeededRng shuffle_rng = base.fork(0x5348);
  SeededRng noise_rng = base.fork(0x4e4f);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x0 = data.batch(idx);
      const auto labels = data.batch_labels(idx);
      adam.zero_grad();
      Tensor l = loss(x0, labels, noise_rng);
      const double value = l.item();
      if (!std::isfinite(value))
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch));
      backward(l);
      adam.step();
      total += value * static_cast<double>(idx.size());
      ++batches;
    }
    EpochRecord rec{epoch, total / static_cast<double>(order.size()), batches};
    history.push_back(rec.mean_loss);
    if (on_epoch && !on_epoch(rec)) break;
  }
  return history;
}

}  // namespace transfusor
