#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "transfusor/diffusion.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::diffusion {
namespace {

Tensor rows(const Tensor& t, std::size_t first, std::size_t count) {
  Shape shape = t.shape();
  const std::size_t per = t.size() / shape[0];
  shape[0] = count;
  auto v = t.values();
  return Tensor::from(std::move(shape),
                      std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(first * per),
                                          v.begin() + static_cast<std::ptrdiff_t>((first + count) * per)));
}

using StepObserver = std::function<void(std::size_t k, const Tensor& x)>;

// Shared reverse run; `observe` sees x_K first and then every x_{k-1}.
Tensor run_chains(const TransfusorModel& model, const std::optional<ConditionLabel>& label,
                  std::size_t n, double w, SeededRng& rng, const StepObserver& observe) {
  NoGradGuard no_grad;
  const auto& cfg = model.net.config();
  const std::size_t K = model.schedule.steps();
  const std::vector<std::size_t> ids(n, nn::category_id(label));
  Tensor x = randn({n, cfg.seq_len, 2}, rng);
  if (observe) observe(K, x);
  for (std::size_t k = K; k >= 1; --k) {
    x = reverse_step(model.net, x, k, ids, model.schedule, w, rng);
    if (observe) observe(k - 1, x);
  }
  return x;
}

void check_ready(const TransfusorModel& model) {
  if (!model.net.initialized()) throw StateError("noise network has no parameters");
  if (model.schedule.empty()) throw StateError("model has no noise schedule");
  if (!model.stats) throw StateError("model has no normalization statistics");
}

DeltaTrajectory chain_deltas(const Tensor& x, std::size_t chain, const NormalizationStats& stats) {
  const std::size_t per = x.size() / x.dim(0);
  return stats.denormalize(x.values().subspan(chain * per, per));
}

}  // namespace

Tensor guidance_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
  return sub(scale(eps_cond, 1.0 + w), scale(eps_uncond, w));
}

Tensor guided_noise(const TransfusorNet& net, const Tensor& x_k, std::size_t k,
                    std::span<const std::size_t> ids, double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("guidance weight must be >= 0");
  const std::size_t batch = x_k.dim(0);
  if (w == 0.0) {
    const std::vector<std::size_t> steps(batch, k);
    return net.predict_noise(x_k, steps, ids);
  }
  const std::vector<std::size_t> steps(2 * batch, k);
  std::vector<std::size_t> both(ids.begin(), ids.end());
  both.resize(2 * batch, nn::CategoryTable::kNullToken);
  const Tensor eps = net.predict_noise(concat({x_k, x_k}, 0), steps, both);
  return guidance_combine(rows(eps, 0, batch), rows(eps, batch, batch), w);
}

Tensor reverse_mean(const Tensor& x_k, std::size_t k, const Tensor& eps_hat,
                    const NoiseSchedule& schedule) {
  const double coef = schedule.beta(k) / std::sqrt(1.0 - schedule.alpha_bar(k));
  return scale(sub(x_k, scale(eps_hat, coef)), 1.0 / std::sqrt(schedule.alpha(k)));
}

Tensor reverse_step(const TransfusorNet& net, const Tensor& x_k, std::size_t k,
                    std::span<const std::size_t> ids, const NoiseSchedule& schedule, double w,
                    SeededRng& rng) {
  if (k == 0) throw UsageError("reverse step from k = 0 is undefined");
  schedule.beta(k);
  const Tensor mu = reverse_mean(x_k, k, guided_noise(net, x_k, k, ids, w), schedule);
  if (k == 1) return mu;
  return add(mu, scale(randn(x_k.shape(), rng), schedule.sigma(k)));
}

std::vector<DeltaTrajectory> sample_trajectories(const TransfusorModel& model,
                                                 const std::optional<ConditionLabel>& label,
                                                 std::size_t n, double w, SeededRng& rng) {
  check_ready(model);
  if (n == 0) return {};
  const Tensor x = run_chains(model, label, n, w, rng, {});
  std::vector<DeltaTrajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(chain_deltas(x, i, *model.stats));
  return out;
}

std::map<std::size_t, std::vector<Trajectory>> snapshot_diffusion(
    const TransfusorModel& model, const std::optional<ConditionLabel>& label, std::size_t n,
    std::span<const std::size_t> steps, double w, SeededRng& rng) {
  check_ready(model);
  const std::size_t K = model.schedule.steps();
  std::map<std::size_t, std::vector<Trajectory>> out;
  for (std::size_t s : steps) {
    if (s > K)
      throw UsageError("snapshot step " + std::to_string(s) + " outside 0.." + std::to_string(K));
    out[s];
  }
  if (n == 0 || out.empty()) return out;
  run_chains(model, label, n, w, rng, [&](std::size_t k, const Tensor& x) {
    auto it = out.find(k);
    if (it == out.end()) return;
    for (std::size_t i = 0; i < n; ++i)
      it->second.push_back(from_deltas(chain_deltas(x, i, *model.stats)));
  });
  return out;
}

}  // namespace transfusor::diffusion
