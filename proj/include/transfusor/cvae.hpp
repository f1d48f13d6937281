#pragma once
// Conditional variational autoencoder baseline built from the same blocks as
// the diffusion network.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "transfusor/labels.hpp"
#include "transfusor/nn.hpp"
#include "transfusor/rng.hpp"
#include "transfusor/tensor.hpp"
#include "transfusor/training.hpp"
#include "transfusor/trajectory.hpp"

namespace transfusor::cvae {

struct CvaeConfig {
  std::size_t seq_len = 14;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t latent = 64;
  std::size_t category_dim = 64;
  std::size_t time_dim = 64;  // zero-filled; keeps the fusion layer shape shared
  std::size_t encoder_blocks = 1;
  std::size_t decoder_blocks = 1;
  double kl_weight = 0.01;

  std::size_t condition_dim() const { return category_dim + time_dim; }
  void validate() const;  // ConfigError
};

struct Posterior {
  Tensor mean;     // [B, latent]
  Tensor log_var;  // [B, latent]
};

class Cvae {
 public:
  Cvae() = default;
  static Cvae init(const CvaeConfig& config, SeededRng& rng);

  bool initialized() const { return initialized_; }
  const CvaeConfig& config() const { return config_; }

  // x: [B, S, 2] normalized increments; ids: B category rows.
  Posterior encode(const Tensor& x, std::span<const std::size_t> ids) const;
  // z: [B, latent] -> [B, seq_len, 2] normalized increments.
  Tensor decode(const Tensor& z, std::span<const std::size_t> ids) const;

  nn::ParamList parameters() const;

  nn::CategoryTable categories;
  nn::Linear enc_embed;
  nn::ConditionLinear enc_fuse;
  std::vector<nn::TransformerBlock> enc_blocks;
  nn::Linear enc_mean, enc_log_var;
  nn::Linear dec_embed;
  nn::ConditionLinear dec_fuse;
  std::vector<nn::TransformerBlock> dec_blocks;
  nn::Linear dec_out;

 private:
  Tensor condition(std::span<const std::size_t> ids) const;
  CvaeConfig config_;
  bool initialized_ = false;
};

// z = mean + exp(log_var / 2) * eps
Tensor reparameterize(const Posterior& q, const Tensor& eps);

// Batch mean of 0.5 * sum(mean^2 + exp(log_var) - 1 - log_var).
Tensor kl_divergence(const Posterior& q);

struct LossParts {
  Tensor total, reconstruction, kl;
};

// MSE(x0, decode(reparameterize(encode(x0)))) + kl_weight * KL; eps drawn
// from rng unless given.
LossParts cvae_loss(const Cvae& model, const Tensor& x0, std::span<const std::size_t> labels,
                    SeededRng& rng, const Tensor* eps = nullptr);

struct CvaeModel {
  Cvae net;
  std::optional<NormalizationStats> stats;
};

// z ~ N(0, I), decoded with the label and denormalized. StateError when the
// network or the normalization statistics are missing.
std::vector<DeltaTrajectory> sample(const CvaeModel& model, const ConditionLabel& label,
                                    std::size_t n, SeededRng& rng);

std::vector<double> train(CvaeModel& model, const SequenceDataset& data,
                          const TrainingConfig& config, const EpochCallback& on_epoch = {});

}  // namespace transfusor::cvae
