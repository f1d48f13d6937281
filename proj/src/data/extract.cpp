#include <cmath>
#include <string>

#include "transfusor/data.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::data {
namespace {

Trajectory slice(const Track& track, std::size_t first, std::size_t last, std::int64_t cbt_frame) {
  Trajectory t;
  t.frame_rate_hz = kFrameRateHz;
  t.canonical = track.canonical;
  t.source = {track.id, cbt_frame, track.samples[first].frame};
  const std::size_t n = last - first + 1;
  t.points.reserve(n);
  t.vx.reserve(n);
  t.vy.reserve(n);
  for (std::size_t i = first; i <= last; ++i) {
    const auto& s = track.samples[i];
    t.points.push_back({s.x, s.y});
    t.vx.push_back(s.vx);
    t.vy.push_back(s.vy);
  }
  return t;
}

void add_moment(RatioMoments& m, double sum, double sq, std::size_t n) {
  m.count = n;
  if (n == 0) return;
  m.mean = sum / static_cast<double>(n);
  m.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(n)));
}

}  // namespace

WindowResult extract_fixed_window(const Track& track, const LaneChangeEvent& cbt,
                                  std::size_t half_window) {
  if (half_window == 0) throw UsageError("half window must be positive");
  WindowResult r;
  if (cbt.index >= track.samples.size()) {
    r.rejection = "CBT index outside the track";
    return r;
  }
  if (cbt.index < half_window) {
    r.rejection = "window underflow: " + std::to_string(half_window - cbt.index) +
                  " frames missing before CBT";
    return r;
  }
  if (cbt.index + half_window > track.samples.size()) {
    r.rejection = "window overflow: " +
                  std::to_string(cbt.index + half_window - track.samples.size()) +
                  " frames missing after CBT";
    return r;
  }
  r.trajectory = slice(track, cbt.index - half_window, cbt.index + half_window - 1, cbt.frame);
  return r;
}

DynamicWindow extract_dynamic_window(const Track& track, const LaneChangeEvent& cbt) {
  const auto& s = track.samples;
  const std::size_t n = s.size();
  if (cbt.index >= n) throw UsageError("CBT index outside the track");
  // prefix[i] = sum of |v_y| over samples [0, i)
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + std::abs(s[i].vy);
  const std::size_t w = kStabilityFrames;
  auto stable = [&](std::size_t first) {
    return (prefix[first + w] - prefix[first]) / static_cast<double>(w) < kStabilityThreshold;
  };

  DynamicWindow d;
  d.clamped_start = true;
  d.start_index = 0;
  for (std::size_t i = cbt.index + 1; i-- > 0;) {
    if (i + 1 < w) break;
    if (stable(i + 1 - w)) {
      d.start_index = i;
      d.clamped_start = false;
      break;
    }
  }
  d.clamped_end = true;
  d.end_index = n - 1;
  for (std::size_t i = cbt.index; i + w <= n; ++i) {
    if (stable(i)) {
      d.end_index = i;
      d.clamped_end = false;
      break;
    }
  }
  d.trajectory = slice(track, d.start_index, d.end_index, cbt.frame);
  return d;
}

double compute_speed_ratio(const Trajectory& traj) {
  if (!traj.has_velocities() || traj.vx.size() != traj.vy.size())
    throw DataError("speed ratio needs per-point velocities");
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < traj.vx.size(); ++i) {
    sx += std::abs(traj.vx[i]);
    sy += std::abs(traj.vy[i]);
  }
  if (!(sx > 0.0)) throw DataError("trajectory has no longitudinal motion");
  const double n = static_cast<double>(traj.vx.size());
  return (sy / n) / (sx / n);
}

SpeedRatioStats fit_speed_ratio_stats(std::span<const RatioSample> samples) {
  SpeedRatioStats st;
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples)
      if (static_cast<int>(s.vehicle) == c) {
        sum += s.ratio;
        ++n;
      }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    double sq = 0.0;
    for (const auto& s : samples)
      if (static_cast<int>(s.vehicle) == c) sq += (s.ratio - mean) * (s.ratio - mean);
    add_moment(st.by_class[c], sum, sq, n);
  }
  return st;
}

Aggressiveness label_aggressiveness(double ratio, const RatioMoments& stats) {
  if (ratio > stats.mean + stats.stddev) return Aggressiveness::kOver;
  if (ratio < stats.mean - stats.stddev) return Aggressiveness::kLow;
  return Aggressiveness::kNormal;
}

std::string_view to_string(ExtractionMethod m) {
  switch (m) {
    case ExtractionMethod::kFixed150: return "fixed150";
    case ExtractionMethod::kFixed300: return "fixed300";
    case ExtractionMethod::kDynamic: return "dynamic";
  }
  return "?";
}

ExtractionMethod parse_extraction_method(std::string_view text) {
  if (text == "fixed150") return ExtractionMethod::kFixed150;
  if (text == "fixed300") return ExtractionMethod::kFixed300;
  if (text == "dynamic") return ExtractionMethod::kDynamic;
  throw UsageError("unknown extraction method '" + std::string(text) +
                   "'; expected fixed150, fixed300 or dynamic");
}

std::vector<DeltaTrajectory> Corpus::deltas() const {
  std::vector<DeltaTrajectory> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(to_deltas(it.trajectory));
  return out;
}

std::vector<ConditionLabel> Corpus::labels() const {
  std::vector<ConditionLabel> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.label);
  return out;
}

std::vector<Trajectory> Corpus::category(const ConditionLabel& label) const {
  std::vector<Trajectory> out;
  for (const auto& it : items)
    if (it.label == label) out.push_back(origin_aligned(it.trajectory));
  return out;
}

Corpus extract_corpus(const TrackTable& canonical, const ExtractOptions& options) {
  Corpus corpus;
  corpus.method = options.method;
  struct Pending {
    Trajectory traj;
    Direction direction;
    VehicleClass vehicle;
    double ratio;
  };
  std::vector<Pending> pending;
  for (const auto& track : canonical.tracks) {
    if (!track.canonical) throw UsageError("extraction needs a canonicalized track table");
    std::int64_t last_end = -1;
    for (const auto& ev : detect_cbt(track)) {
      std::optional<Trajectory> traj;
      if (options.method == ExtractionMethod::kDynamic) {
        traj = extract_dynamic_window(track, ev).trajectory;
      } else {
        const std::size_t half = options.method == ExtractionMethod::kFixed150 ? 75 : 150;
        auto r = extract_fixed_window(track, ev, half);
        if (!r.trajectory) {
          corpus.rejections.push_back({track.id, ev.frame, r.rejection});
          continue;
        }
        traj = std::move(r.trajectory);
      }
      const std::int64_t start = traj->source.start_frame;
      const std::int64_t end = start + static_cast<std::int64_t>(traj->size()) - 1;
      if (options.exclude_overlapping && start <= last_end) {
        corpus.rejections.push_back({track.id, ev.frame, "overlaps the previous maneuver"});
        continue;
      }
      last_end = end;
      double ratio = 0.0;
      try {
        ratio = compute_speed_ratio(*traj);
      } catch (const DataError& e) {
        corpus.rejections.push_back({track.id, ev.frame, e.what()});
        continue;
      }
      pending.push_back({std::move(*traj), ev.direction, track.vehicle, ratio});
    }
  }

  std::vector<RatioSample> samples;
  samples.reserve(pending.size());
  for (const auto& p : pending) samples.push_back({p.vehicle, p.ratio});
  corpus.stats = fit_speed_ratio_stats(samples);

  corpus.items.reserve(pending.size());
  for (auto& p : pending) {
    LabeledTrajectory item;
    item.label = {p.direction, p.vehicle, label_aggressiveness(p.ratio, corpus.stats.of(p.vehicle))};
    item.speed_ratio = p.ratio;
    item.trajectory = options.method == ExtractionMethod::kFixed150
                          ? downsample(p.traj, options.downsample_factor)
                          : std::move(p.traj);
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

CorpusManifest corpus_stats(const Corpus& corpus) {
  CorpusManifest m;
  m.method = corpus.method;
  m.stats = corpus.stats;
  m.rejections = corpus.rejections.size();
  struct Acc {
    double sum = 0.0;
    std::vector<double> values;
  };
  std::array<std::array<Acc, 3>, 4> acc{};
  for (const auto& it : corpus.items) {
    const int g = static_cast<int>(it.label.direction) * 2 + static_cast<int>(it.label.vehicle);
    const int a = static_cast<int>(it.label.aggressiveness);
    acc[g][a].sum += it.speed_ratio;
    acc[g][a].values.push_back(it.speed_ratio);
  }
  for (int g = 0; g < 4; ++g) {
    for (int a = 0; a < 3; ++a) {
      const auto& x = acc[g][a];
      const std::size_t n = x.values.size();
      const double mean = n ? x.sum / static_cast<double>(n) : 0.0;
      double sq = 0.0;
      for (double v : x.values) sq += (v - mean) * (v - mean);
      add_moment(m.groups[g].ratios[a], x.sum, sq, n);
      m.groups[g].counts[a] = n;
      m.groups[g].total += n;
    }
    m.total += m.groups[g].total;
  }
  return m;
}

}  // namespace transfusor::data
