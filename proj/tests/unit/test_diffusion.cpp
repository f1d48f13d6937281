#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "transfusor/data.hpp"
#include "transfusor/diffusion.hpp"
#include "transfusor/errors.hpp"

using namespace transfusor;
using namespace transfusor::diffusion;

namespace {

TransfusorConfig tiny_config() {
  TransfusorConfig c;
  c.hidden = 16;
  c.heads = 2;
  c.ff_dim = 32;
  c.blocks = 1;
  c.category_dim = 8;
  c.time_dim = 8;
  c.reduce_dim = 4;
  return c;
}

TransfusorModel tiny_model(std::uint64_t seed, std::size_t K = 10) {
  SeededRng rng(seed);
  TransfusorModel m;
  m.net = TransfusorNet::init(tiny_config(), rng);
  m.schedule = NoiseSchedule::build(K, 1e-2, 0.3);
  m.stats = NormalizationStats{};
  return m;
}

SequenceDataset synthetic_dataset(std::size_t per_category, NormalizationStats* stats_out = nullptr) {
  SeededRng rng(11);
  const auto synth = data::synth_corpus(data::SynthSpec::uniform(per_category), rng);
  const auto corpus = data::ground_truth_corpus(synth);
  const auto deltas = corpus.deltas();
  const auto labels = corpus.labels();
  const auto stats = fit_normalization(deltas);
  if (stats_out) *stats_out = stats;
  return make_dataset(deltas, labels, stats);
}

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("default schedule invariants") {
  const auto s = NoiseSchedule::build();
  REQUIRE(s.steps() == 100);
  CHECK(s.beta(1) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(s.beta(100) == doctest::Approx(0.15).epsilon(1e-15));
  double running = 1.0;
  for (std::size_t k = 1; k <= 100; ++k) {
    CHECK(s.beta(k) > 0.0);
    CHECK(s.beta(k) < 1.0);
    // linear in k
    CHECK(s.beta(k) == doctest::Approx(1e-3 + (0.15 - 1e-3) * (k - 1) / 99.0).epsilon(1e-12));
    running *= 1.0 - s.beta(k);
    CHECK(std::abs(s.alpha_bar(k) - running) < 1e-12);
    CHECK(s.alpha(k) == 1.0 - s.beta(k));
    CHECK(s.sigma(k) * s.sigma(k) == doctest::Approx(s.beta(k)).epsilon(1e-14));
    if (k > 1) CHECK(s.alpha_bar(k) < s.alpha_bar(k - 1));
  }
  // Closed form of the product: log abar = sum log(1 - beta).
  double log_abar = 0.0;
  for (std::size_t k = 1; k <= 100; ++k) log_abar += std::log1p(-s.beta(k));
  CHECK(s.alpha_bar(100) == doctest::Approx(std::exp(log_abar)).epsilon(1e-12));
  CHECK(s.alpha_bar(100) < 0.01);
}

TEST_CASE("schedule edge cases and errors") {
  const auto one = NoiseSchedule::build(1, 0.2, 0.2);
  CHECK(one.alpha_bar(1) == 1.0 - 0.2);
  CHECK_THROWS_AS(NoiseSchedule::build(0), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::build(10, 0.0, 0.1), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::build(10, 0.2, 0.1), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::build(10, 0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({0.1, 1.5}), ConfigError);
  const auto s = NoiseSchedule::build(5);
  CHECK_THROWS_AS(s.beta(0), UsageError);
  CHECK_THROWS_AS(s.alpha_bar(6), UsageError);

  // Strictly decreasing for arbitrary valid inputs.
  SeededRng rng(3);
  for (int t = 0; t < 20; ++t) {
    const double a = rng.uniform(1e-4, 0.5), b = rng.uniform(a, 0.99);
    const auto r = NoiseSchedule::build(1 + rng.below(200), a, b);
    for (std::size_t k = 2; k <= r.steps(); ++k) CHECK(r.alpha_bar(k) < r.alpha_bar(k - 1));
  }
}

TEST_CASE("forward process closed forms") {
  const auto s = NoiseSchedule::build();
  SeededRng rng(5);
  const Tensor eps = randn({3, 14, 2}, rng);
  const Tensor zero = Tensor::zeros({3, 14, 2});
  const Tensor xk = forward_sample(zero, 37, eps, s);
  for (std::size_t i = 0; i < eps.size(); ++i)
    CHECK(xk[i] == std::sqrt(1.0 - s.alpha_bar(37)) * eps[i]);

  const Tensor x0 = randn({3, 14, 2}, rng);
  const auto tiny = NoiseSchedule::from_betas({1e-14});
  const Tensor same = forward_sample(x0, 1, zero, tiny);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(same[i] == doctest::Approx(x0[i]).epsilon(1e-12));

  const Tensor ones = Tensor::full({2, 14, 2}, 1.0);
  const Tensor step = forward_step(Tensor::zeros({2, 14, 2}), 10, ones, s);
  for (std::size_t i = 0; i < step.size(); ++i) CHECK(step[i] == std::sqrt(s.beta(10)));
  const Tensor ident = forward_step(x0, 1, eps, tiny);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(ident[i] == doctest::Approx(x0[i]).epsilon(1e-6));

  CHECK_THROWS_AS(forward_sample(x0, 0, eps, s), UsageError);
  CHECK_THROWS_AS(forward_step(x0, 101, eps, s), UsageError);
  CHECK_THROWS_AS(forward_sample(x0, 3, Tensor::zeros({3, 14}), s), DimensionError);
}

TEST_CASE("iterated single steps match the closed form in distribution") {
  const auto s = NoiseSchedule::build();
  const std::size_t k = s.steps() / 2, n = 10000;
  SeededRng rng(17);
  const Tensor x0 = Tensor::from({1, 2}, {1.5, -0.7});
  std::array<std::vector<double>, 2> iter, closed;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x = x0;
    for (std::size_t j = 1; j <= k; ++j) x = forward_step(x, j, randn({1, 2}, rng), s);
    const Tensor c = forward_sample(x0, k, randn({1, 2}, rng), s);
    for (int a = 0; a < 2; ++a) {
      iter[a].push_back(x[a]);
      closed[a].push_back(c[a]);
    }
  }
  for (int a = 0; a < 2; ++a) {
    const auto mi = moments(iter[a]), mc = moments(closed[a]);
    const double nd = static_cast<double>(n);
    const double se_mean = std::sqrt(mi.var / nd + mc.var / nd);
    CHECK(std::abs(mi.mean - mc.mean) < 3.0 * se_mean);
    // Standard error of a sample variance for Gaussian data: var * sqrt(2/(n-1)).
    const double se_var = std::sqrt(2.0 / (nd - 1.0)) * std::hypot(mi.var, mc.var);
    CHECK(std::abs(mi.var - mc.var) < 3.0 * se_var);
    // Both agree with the analytic marginal.
    CHECK(mc.mean == doctest::Approx(std::sqrt(s.alpha_bar(k)) * x0[a]).epsilon(0.05));
    CHECK(mc.var == doctest::Approx(1.0 - s.alpha_bar(k)).epsilon(0.05));
  }
}

TEST_CASE("marginal at the last step is near isotropic") {
  const auto s = NoiseSchedule::build();
  SeededRng rng(23);
  const Tensor x0 = Tensor::from({1, 3, 2}, {2.0, -2.0, 0.5, 1.0, -1.5, 0.0});
  std::vector<std::vector<double>> cols(6);
  for (int i = 0; i < 10000; ++i) {
    const Tensor x = forward_sample(x0, s.steps(), randn({1, 3, 2}, rng), s);
    for (std::size_t c = 0; c < 6; ++c) cols[c].push_back(x[c]);
  }
  for (const auto& c : cols) {
    const auto m = moments(c);
    CHECK(std::abs(m.mean) < 0.05);
    CHECK(m.var > 0.9);
    CHECK(m.var < 1.1);
  }
}

TEST_CASE("reverse mean scalar oracle") {
  const auto s = NoiseSchedule::build();
  const double x0 = 0.8, e = -1.3;
  for (std::size_t k : {1, 2, 10, 50, 100}) {
    const double ab = s.alpha_bar(k);
    const double xk = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * e;
    const Tensor mu = reverse_mean(Tensor::from({1, 1}, {xk}), k, Tensor::from({1, 1}, {e}), s);
    // With the true noise the mean is sqrt(abar_{k-1}) x0 plus a shrunk noise term.
    const double ab_prev = k == 1 ? 1.0 : s.alpha_bar(k - 1);
    const double noise_coef =
        s.alpha(k) * (1.0 - ab_prev) / (std::sqrt(1.0 - ab) * std::sqrt(s.alpha(k)));
    CHECK(mu[0] == doctest::Approx(std::sqrt(ab_prev) * x0 + noise_coef * e).epsilon(1e-12));
    if (k == 1) CHECK(std::abs(mu[0] - x0) < 1e-12);
  }
  // beta -> 0 with zero noise estimate is a fixed point.
  const auto flat = NoiseSchedule::from_betas({1e-15, 1e-15});
  const Tensor x = Tensor::from({1, 2}, {0.3, -4.0});
  const Tensor m = reverse_mean(x, 2, Tensor::zeros({1, 2}), flat);
  CHECK(m[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m[1] == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("guidance identity and combine formula") {
  const auto model = tiny_model(1);
  SeededRng rng(2);
  const Tensor x = randn({3, 14, 2}, rng);
  const std::vector<std::size_t> ids{0, 5, 11}, steps(3, 3), null(3, nn::CategoryTable::kNullToken);
  const Tensor cond = model.net.predict_noise(x, steps, ids);
  const Tensor uncond = model.net.predict_noise(x, steps, null);

  const Tensor g0 = guided_noise(model.net, x, 3, ids, 0.0);
  const Tensor f0 = guidance_combine(cond, uncond, 0.0);
  for (std::size_t i = 0; i < cond.size(); ++i) {
    CHECK(g0[i] == cond[i]);
    CHECK(f0[i] == cond[i]);
  }
  const Tensor g = guided_noise(model.net, x, 3, ids, 2.5);
  for (std::size_t i = 0; i < cond.size(); ++i)
    CHECK(g[i] == doctest::Approx(3.5 * cond[i] - 2.5 * uncond[i]).epsilon(1e-10));
  CHECK_THROWS_AS(guided_noise(model.net, x, 3, ids, -0.5), ConfigError);

  // Sampling at w = 0 follows the conditional path bit for bit.
  SeededRng r1(9), r2(9);
  const Tensor a = reverse_step(model.net, x, 3, ids, model.schedule, 0.0, r1);
  const Tensor mu = reverse_mean(x, 3, f0, model.schedule);
  const Tensor z = randn(x.shape(), r2);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i] == mu[i] + model.schedule.sigma(3) * z[i]);
}

TEST_CASE("last reverse step adds no noise") {
  const auto model = tiny_model(4);
  SeededRng rng(5);
  const Tensor x = randn({2, 14, 2}, rng);
  const std::vector<std::size_t> ids{1, 2};
  SeededRng r1(1), r2(2);
  const Tensor a = reverse_step(model.net, x, 1, ids, model.schedule, 0.0, r1);
  const Tensor b = reverse_step(model.net, x, 1, ids, model.schedule, 0.0, r2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK_THROWS_AS(reverse_step(model.net, x, 0, ids, model.schedule, 0.0, r1), UsageError);
}

TEST_CASE("noise network contract") {
  const auto model = tiny_model(6);
  SeededRng rng(7);
  for (std::size_t b : {1, 4}) {
    const Tensor x = randn({b, 14, 2}, rng);
    const std::vector<std::size_t> steps(b, 3), ids(b, 2);
    const Tensor y1 = model.net.predict_noise(x, steps, ids);
    const Tensor y2 = model.net.predict_noise(x, steps, ids);
    CHECK(y1.shape() == x.shape());
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
  }
  TransfusorNet empty;
  const Tensor x = randn({1, 14, 2}, rng);
  const std::vector<std::size_t> one{1};
  CHECK_THROWS_AS(empty.predict_noise(x, one, one), StateError);

  TransfusorConfig bad = tiny_config();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("default network has the documented layer sizes") {
  SeededRng rng(0);
  const auto net = TransfusorNet::init(TransfusorConfig{}, rng);
  CHECK(net.blocks.size() == 4);
  std::size_t total = 0;
  total = nn::parameter_count(net.parameters());
  CHECK(total > 0);
  const Tensor x = randn({2, 14, 2}, rng);
  const std::vector<std::size_t> steps{1, 100}, ids{0, 12};
  CHECK(net.predict_noise(x, steps, ids).shape() == Shape{2, 14, 2});
}

TEST_CASE("untrained loss on standardized deltas is near one") {
  const auto data = synthetic_dataset(11);
  REQUIRE(data.size() >= 128);
  std::vector<std::size_t> idx(128);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x0 = data.batch(idx);
  const auto labels = data.batch_labels(idx);
  const auto schedule = NoiseSchedule::build();
  for (std::uint64_t seed : {0, 1, 2}) {
    SeededRng rng(seed);
    const auto net = TransfusorNet::init(TransfusorConfig{}, rng);
    const double loss = training_loss(net, x0, labels, schedule, rng, 0.1).item();
    CHECK(loss > 0.8);
    CHECK(loss < 1.2);
  }
  SeededRng rng(0);
  const auto net = TransfusorNet::init(tiny_config(), rng);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(training_loss(net, Tensor{}, none, schedule, rng, 0.1),
                  UsageError);
}

TEST_CASE("training is deterministic and label-sensitive") {
  NormalizationStats stats;
  const auto data = synthetic_dataset(4, &stats);
  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 42;
  auto m1 = tiny_model(8), m2 = tiny_model(8);
  m1.stats = m2.stats = stats;
  const auto log1 = train(m1, data, cfg);
  const auto log2 = train(m2, data, cfg);
  REQUIRE(log1.size() == 3);
  for (std::size_t i = 0; i < log1.size(); ++i) CHECK(log1[i] == log2[i]);
  auto p1 = m1.net.parameters(), p2 = m2.net.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::size_t j = 0; j < p1[i].tensor.size(); ++j)
      REQUIRE(p1[i].tensor[j] == p2[i].tensor[j]);

  SeededRng s1(3), s2(3);
  const auto a = sample_trajectories(m1, ConditionLabel::from_index(2), 5, 0.5, s1);
  const auto b = sample_trajectories(m2, ConditionLabel::from_index(2), 5, 0.5, s2);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].increments.size() == 14);
    for (std::size_t j = 0; j < 14; ++j) {
      CHECK(a[i].increments[j].x == b[i].increments[j].x);
      CHECK(a[i].increments[j].y == b[i].increments[j].y);
      CHECK(std::isfinite(a[i].increments[j].x));
    }
  }

  SeededRng rng(4);
  const Tensor x = randn({1, 14, 2}, rng);
  const std::vector<std::size_t> k{5}, left{0}, right{6};
  const Tensor el = m1.net.predict_noise(x, k, left);
  const Tensor er = m1.net.predict_noise(x, k, right);
  double diff = 0.0;
  for (std::size_t i = 0; i < el.size(); ++i) diff += (el[i] - er[i]) * (el[i] - er[i]);
  CHECK(diff > 0.0);

  cfg.epochs = 1;
  auto wrong = tiny_model(8);
  wrong.stats = stats;
  SequenceDataset short_data;
  short_data.seq_len = 7;
  short_data.add(std::vector<double>(14, 0.0), 0);
  CHECK_THROWS(train(wrong, short_data, cfg));
}

TEST_CASE("sampling preconditions and empty requests") {
  auto model = tiny_model(9);
  SeededRng rng(1);
  CHECK(sample_trajectories(model, std::nullopt, 0, 0.0, rng).empty());
  model.stats.reset();
  CHECK_THROWS_AS(sample_trajectories(model, std::nullopt, 2, 0.0, rng), StateError);
  const std::vector<std::size_t> steps{0};
  CHECK_THROWS_AS(snapshot_diffusion(model, std::nullopt, 2, steps, 0.0, rng), StateError);
  model.stats = NormalizationStats{};
  const std::vector<std::size_t> bad{11};
  CHECK_THROWS_AS(snapshot_diffusion(model, std::nullopt, 2, bad, 0.0, rng), UsageError);
}

TEST_CASE("snapshots") {
  auto model = tiny_model(10);
  NormalizationStats stats;
  stats.std = {2.0, 0.5};
  model.stats = stats;
  const std::size_t K = model.schedule.steps();

  // Step 0 of a shared run equals the plain sampler with the same seed.
  SeededRng r1(12), r2(12);
  const std::vector<std::size_t> zero{0, K};
  const auto snaps = snapshot_diffusion(model, ConditionLabel{}, 6, zero, 0.0, r1);
  const auto plain = sample_trajectories(model, ConditionLabel{}, 6, 0.0, r2);
  REQUIRE(snaps.at(0).size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const Trajectory t = from_deltas(plain[i]);
    REQUIRE(t.points.size() == 15);
    for (std::size_t j = 0; j < 15; ++j) {
      CHECK(snaps.at(0)[i].points[j].x == t.points[j].x);
      CHECK(snaps.at(0)[i].points[j].y == t.points[j].y);
    }
  }

  // Step K is pure noise: point j is a sum of j independent increments with
  // variance std^2 per axis.
  SeededRng r3(13);
  const std::vector<std::size_t> last{K};
  const auto noise = snapshot_diffusion(model, std::nullopt, 3000, last, 0.0, r3).at(K);
  for (std::size_t j : {1, 7, 14}) {
    std::vector<double> xs, ys;
    for (const auto& t : noise) {
      xs.push_back(t.points[j].x);
      ys.push_back(t.points[j].y);
    }
    CHECK(moments(xs).var == doctest::Approx(4.0 * j).epsilon(0.1));
    CHECK(moments(ys).var == doctest::Approx(0.25 * j).epsilon(0.1));
  }
}
