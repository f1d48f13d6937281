#pragma once
// Shared mini-batch loop for the diffusion network and the CVAE.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "transfusor/labels.hpp"
#include "transfusor/nn.hpp"
#include "transfusor/rng.hpp"
#include "transfusor/tensor.hpp"
#include "transfusor/trajectory.hpp"

namespace transfusor {

// Normalized increment sequences with their category indices.
struct SequenceDataset {
  std::size_t seq_len = 0;
  std::vector<double> values;  // [n, seq_len, 2]
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  void add(std::span<const double> flat, std::size_t label);
  // [idx.size(), seq_len, 2]
  Tensor batch(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> batch_labels(std::span<const std::size_t> idx) const;
};

SequenceDataset make_dataset(std::span<const DeltaTrajectory> deltas,
                             std::span<const ConditionLabel> labels,
                             const NormalizationStats& stats);

struct TrainingConfig {
  std::size_t epochs = 2500;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double p_uncond = 0.1;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

// Scalar loss for one batch. The rng is the loop's noise stream.
using BatchLoss =
    std::function<Tensor(const Tensor& x0, std::span<const std::size_t> labels, SeededRng& rng)>;
// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Shuffles with Fisher-Yates each epoch, applies Adam per batch and returns the
// per-epoch mean losses (batch losses weighted by batch size). A non-finite
// loss raises TrainingError before any parameter is updated for that batch.
std::vector<double> train_loop(const SequenceDataset& data, const nn::ParamList& params,
                               const TrainingConfig& config, const BatchLoss& loss,
                               const EpochCallback& on_epoch = {});

}  // namespace transfusor
