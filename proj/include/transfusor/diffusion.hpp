#pragma once
// Denoising diffusion over normalized increment sequences: noise schedule,
// forward corruption, the conditional noise-prediction network, its training
// objective and the guided reverse sampler.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "transfusor/labels.hpp"
#include "transfusor/nn.hpp"
#include "transfusor/rng.hpp"
#include "transfusor/tensor.hpp"
#include "transfusor/training.hpp"
#include "transfusor/trajectory.hpp"

namespace transfusor::diffusion {

// Linear beta schedule. Steps are 1-based: k = 1..K.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  // Throws ConfigError unless K >= 1 and 0 < beta_start <= beta_end < 1.
  static NoiseSchedule build(std::size_t K = 100, double beta_start = 1e-3,
                             double beta_end = 0.15);
  // From explicit betas (each in (0, 1)).
  static NoiseSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return beta_.size(); }
  double beta_start() const { return beta_.front(); }
  double beta_end() const { return beta_.back(); }
  double beta(std::size_t k) const { return beta_[check(k)]; }
  double alpha(std::size_t k) const { return alpha_[check(k)]; }
  double alpha_bar(std::size_t k) const { return alpha_bar_[check(k)]; }
  double sigma(std::size_t k) const { return sigma_[check(k)]; }
  bool empty() const { return beta_.empty(); }

 private:
  std::size_t check(std::size_t k) const;
  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
};

// x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) eps
Tensor forward_sample(const Tensor& x0, std::size_t k, const Tensor& eps,
                      const NoiseSchedule& schedule);
// x_k = sqrt(1 - beta_k) x_{k-1} + sqrt(beta_k) eps
Tensor forward_step(const Tensor& x_prev, std::size_t k, const Tensor& eps,
                    const NoiseSchedule& schedule);

struct TransfusorConfig {
  std::size_t seq_len = 14;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t blocks = 4;
  std::size_t category_dim = 64;
  std::size_t time_dim = 64;
  std::size_t reduce_dim = 32;

  std::size_t condition_dim() const { return category_dim + time_dim; }
  void validate() const;
};

// embed (2 -> hidden) + positional encoding -> condition fusion -> blocks
// -> condition reduce (hidden -> reduce_dim) -> condition reduce (-> 2).
class TransfusorNet {
 public:
  TransfusorNet() = default;
  static TransfusorNet init(const TransfusorConfig& config, SeededRng& rng);

  bool initialized() const { return initialized_; }
  const TransfusorConfig& config() const { return config_; }

  // x: [B, S, 2]; steps: B diffusion steps; ids: B category rows (12 = null).
  // Returns predicted noise with x's shape. StateError when uninitialized.
  Tensor predict_noise(const Tensor& x, std::span<const std::size_t> steps,
                       std::span<const std::size_t> ids) const;

  // Stable names; the order is the checkpoint order.
  nn::ParamList parameters() const;

  nn::Linear embed;
  nn::CategoryTable categories;
  nn::ConditionLinear fuse;
  std::vector<nn::TransformerBlock> blocks;
  nn::ConditionLinear reduce_hidden;
  nn::ConditionLinear reduce_out;

 private:
  TransfusorConfig config_;
  bool initialized_ = false;
};

// Per example: k ~ U{1..K}, eps ~ N(0, I), label replaced by the null token
// with probability p_uncond; loss = mean squared error between eps and the
// prediction at x_k. x0: [B, S, 2] normalized; labels are category indices.
Tensor training_loss(const TransfusorNet& net, const Tensor& x0,
                     std::span<const std::size_t> labels, const NoiseSchedule& schedule,
                     SeededRng& rng, double p_uncond);

// (1 + w) eps_cond - w eps_uncond
Tensor guidance_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

// Guided noise prediction at step k for every chain. With w == 0 only the
// conditional pass runs; otherwise both passes share one batch.
Tensor guided_noise(const TransfusorNet& net, const Tensor& x_k, std::size_t k,
                    std::span<const std::size_t> ids, double w);

// One ancestral step x_k -> x_{k-1}; no noise is added at k = 1.
Tensor reverse_step(const TransfusorNet& net, const Tensor& x_k, std::size_t k,
                    std::span<const std::size_t> ids, const NoiseSchedule& schedule, double w,
                    SeededRng& rng);

// Posterior mean of the reverse step for a given noise estimate.
Tensor reverse_mean(const Tensor& x_k, std::size_t k, const Tensor& eps_hat,
                    const NoiseSchedule& schedule);

// Network plus everything needed to turn samples back into metres.
struct TransfusorModel {
  TransfusorNet net;
  NoiseSchedule schedule;
  std::optional<NormalizationStats> stats;
};

// n chains from x_K ~ N(0, I) down to k = 0, denormalized increments with a
// zero origin. label nullopt samples unconditionally. StateError when the
// model has no normalization statistics.
std::vector<DeltaTrajectory> sample_trajectories(const TransfusorModel& model,
                                                 const std::optional<ConditionLabel>& label,
                                                 std::size_t n, double w, SeededRng& rng);

// Same reverse run as sample_trajectories, recording the absolute
// (origin-aligned) trajectories at each requested step in 0..K.
std::map<std::size_t, std::vector<Trajectory>> snapshot_diffusion(
    const TransfusorModel& model, const std::optional<ConditionLabel>& label, std::size_t n,
    std::span<const std::size_t> steps, double w, SeededRng& rng);

// Trains model.net on the dataset with the diffusion objective.
std::vector<double> train(TransfusorModel& model, const SequenceDataset& data,
                          const TrainingConfig& config, const EpochCallback& on_epoch = {});

}  // namespace transfusor::diffusion
