#pragma once
// Central finite-difference oracle for gradient tests. Lives in test code so
// it stays independent of the backward rules it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "transfusor/rng.hpp"
#include "transfusor/tensor.hpp"

namespace transfusor::testing {

struct GradCheckResult {
  double worst_relative = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string worst_where;
};

// Relative error with an absolute floor: entries whose analytic and numeric
// values are both within `abs_floor` of each other count as agreeing, since
// the central difference itself carries roughly 1e-8 absolute noise.
inline double relative_error(double analytic, double numeric, double abs_floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

// Compares backward() against central differences of `loss_fn` for the given
// leaves. `max_entries_per_leaf` (0 = all) samples entries uniformly with rng.
inline GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                                  std::vector<Tensor> leaves, double step = 1e-4,
                                  double tolerance = 1e-3, double abs_floor = 1e-7,
                                  std::size_t max_entries_per_leaf = 0,
                                  SeededRng* rng = nullptr) {
  for (Tensor& leaf : leaves) leaf.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (Tensor& leaf : leaves) {
    auto g = leaf.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(leaf.size(), 0.0);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto values = leaves[li].mutable_values();
    std::vector<std::size_t> entries;
    if (max_entries_per_leaf == 0 || max_entries_per_leaf >= values.size() || !rng) {
      for (std::size_t j = 0; j < values.size(); ++j) entries.push_back(j);
    } else {
      for (std::size_t j = 0; j < max_entries_per_leaf; ++j)
        entries.push_back(static_cast<std::size_t>(rng->below(values.size())));
    }
    for (std::size_t j : entries) {
      const double saved = values[j];
      values[j] = saved + step;
      const double up = loss_fn().item();
      values[j] = saved - step;
      const double down = loss_fn().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = relative_error(analytic[li][j], numeric, abs_floor);
      ++result.checked;
      if (rel >= tolerance) ++result.failures;
      if (rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_where = "leaf " + std::to_string(li) + " entry " +
                             std::to_string(j) + " analytic " +
                             std::to_string(analytic[li][j]) + " numeric " +
                             std::to_string(numeric);
      }
    }
  }
  return result;
}

inline Tensor uniform_tensor(Shape shape, SeededRng& rng, double lo, double hi,
                             bool requires_grad = true) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace transfusor::testing
