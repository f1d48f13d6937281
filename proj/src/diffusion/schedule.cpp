#include <cmath>
#include <string>

#include "transfusor/diffusion.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::diffusion {

NoiseSchedule NoiseSchedule::build(std::size_t K, double beta_start, double beta_end) {
  if (K < 1) throw ConfigError("diffusion step count must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1, got " +
                      std::to_string(beta_start) + ", " + std::to_string(beta_end));
  std::vector<double> betas(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double t = K == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(K - 1);
    betas[i] = beta_start + (beta_end - beta_start) * t;
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
  NoiseSchedule s;
  double running = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta values must lie in (0, 1)");
    running *= 1.0 - b;
    s.alpha_.push_back(1.0 - b);
    s.alpha_bar_.push_back(running);
    s.sigma_.push_back(std::sqrt(b));
  }
  s.beta_ = std::move(betas);
  return s;
}

std::size_t NoiseSchedule::check(std::size_t k) const {
  if (k < 1 || k > beta_.size())
    throw UsageError("diffusion step " + std::to_string(k) + " outside 1.." +
                     std::to_string(beta_.size()));
  return k - 1;
}

Tensor forward_sample(const Tensor& x0, std::size_t k, const Tensor& eps,
                      const NoiseSchedule& schedule) {
  if (x0.shape() != eps.shape())
    throw DimensionError("noise shape " + shape_string(eps.shape()) + " differs from " +
                         shape_string(x0.shape()));
  const double ab = schedule.alpha_bar(k);
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor forward_step(const Tensor& x_prev, std::size_t k, const Tensor& eps,
                    const NoiseSchedule& schedule) {
  if (x_prev.shape() != eps.shape())
    throw DimensionError("noise shape " + shape_string(eps.shape()) + " differs from " +
                         shape_string(x_prev.shape()));
  const double b = schedule.beta(k);
  return add(scale(x_prev, std::sqrt(1.0 - b)), scale(eps, std::sqrt(b)));
}

}  // namespace transfusor::diffusion
