#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "csv.hpp"
#include "transfusor/config.hpp"
#include "transfusor/data.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/fileio.hpp"

namespace transfusor::data {
namespace {

// A logistic profile covers 1%..99% of its rise within 2 ln(99) time constants.
constexpr double kLogisticSpan = 9.19;

constexpr std::string_view kTruthHeader = "vehicle_id,cbt_frame,category,duration_s,speed";

std::string tier_key(std::size_t tier, std::string_view field) {
  return "tier." + std::string(to_string(static_cast<Aggressiveness>(tier))) + "." +
         std::string(field);
}

int lane_of(double y, double lane_width) {
  return static_cast<int>(std::floor(y / lane_width)) + 1;
}

}  // namespace

SynthSpec SynthSpec::uniform(std::size_t per_category) {
  SynthSpec s;
  s.counts.fill(per_category);
  return s;
}

void SynthSpec::validate() const {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw UsageError("synth: spec requests no maneuvers");
  if (!(lane_width > 0.0)) throw UsageError("synth: lane width must be positive");
  if (cbt_min_frame < 1 || cbt_min_frame > cbt_max_frame)
    throw UsageError("synth: need 1 <= cbt_min_frame <= cbt_max_frame");
  if (cbt_max_frame + 2 >= frames_per_track)
    throw UsageError("synth: frames_per_track must exceed cbt_max_frame + 2");
  if (speed_spread < 0.0 || speed_jitter < 0.0)
    throw UsageError("synth: speed spread and jitter must be non-negative");
  if (direction2_fraction < 0.0 || direction2_fraction > 1.0)
    throw UsageError("synth: direction2_fraction must lie in [0, 1]");
  for (const auto& t : tiers) {
    if (!(t.duration_min_s > 0.0) || t.duration_min_s > t.duration_max_s)
      throw UsageError("synth: tier durations need 0 < min <= max");
    if (!(t.car_speed > speed_spread) || !(t.truck_speed > speed_spread))
      throw UsageError("synth: tier speeds must exceed the speed spread");
  }
}

SynthSpec parse_synth_spec(std::string_view text) {
  const KeyValues kv = KeyValues::parse(text, "synth spec");
  SynthSpec s;
  if (auto per = kv.find("per_category")) s = SynthSpec::uniform(kv.get_uint("per_category"));
  if (auto list = kv.find("counts")) {
    const auto f = csv::split(*list);
    if (f.size() != kCategoryCount)
      throw ConfigError("synth spec: counts needs " + std::to_string(kCategoryCount) + " values");
    for (std::size_t i = 0; i < kCategoryCount; ++i) {
      const auto v = csv::parse_int(f[i], "synth spec", 0, "counts");
      if (v < 0) throw ConfigError("synth spec: counts must be non-negative");
      s.counts[i] = static_cast<std::size_t>(v);
    }
  }
  s.lane_width = kv.get_double("lane_width", s.lane_width);
  s.frames_per_track = kv.get_uint("frames_per_track", s.frames_per_track);
  s.cbt_min_frame = kv.get_uint("cbt_min_frame", s.cbt_min_frame);
  s.cbt_max_frame = kv.get_uint("cbt_max_frame", s.cbt_max_frame);
  s.speed_spread = kv.get_double("speed_spread", s.speed_spread);
  s.speed_jitter = kv.get_double("speed_jitter", s.speed_jitter);
  s.direction2_fraction = kv.get_double("direction2_fraction", s.direction2_fraction);
  for (std::size_t t = 0; t < 3; ++t) {
    auto& tier = s.tiers[t];
    tier.duration_min_s = kv.get_double(tier_key(t, "duration_min_s"), tier.duration_min_s);
    tier.duration_max_s = kv.get_double(tier_key(t, "duration_max_s"), tier.duration_max_s);
    tier.car_speed = kv.get_double(tier_key(t, "car_speed"), tier.car_speed);
    tier.truck_speed = kv.get_double(tier_key(t, "truck_speed"), tier.truck_speed);
  }
  s.validate();
  return s;
}

std::string synth_spec_text(const SynthSpec& spec) {
  KeyValues kv;
  std::string counts;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    if (i) counts += ',';
    counts += std::to_string(spec.counts[i]);
  }
  kv.set("counts", counts);
  kv.set("lane_width", spec.lane_width);
  kv.set("frames_per_track", std::uint64_t{spec.frames_per_track});
  kv.set("cbt_min_frame", std::uint64_t{spec.cbt_min_frame});
  kv.set("cbt_max_frame", std::uint64_t{spec.cbt_max_frame});
  kv.set("speed_spread", spec.speed_spread);
  kv.set("speed_jitter", spec.speed_jitter);
  kv.set("direction2_fraction", spec.direction2_fraction);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& tier = spec.tiers[t];
    kv.set(tier_key(t, "duration_min_s"), tier.duration_min_s);
    kv.set(tier_key(t, "duration_max_s"), tier.duration_max_s);
    kv.set(tier_key(t, "car_speed"), tier.car_speed);
    kv.set(tier_key(t, "truck_speed"), tier.truck_speed);
  }
  return kv.text();
}

SynthResult synth_corpus(const SynthSpec& spec, SeededRng& rng) {
  spec.validate();
  SynthResult out;
  const double dt = 1.0 / kFrameRateHz;
  const double w = spec.lane_width;
  std::int64_t next_id = 1;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const ConditionLabel label = ConditionLabel::from_index(c);
    const auto& tier = spec.tiers[static_cast<std::size_t>(label.aggressiveness)];
    const double base =
        label.vehicle == VehicleClass::kCar ? tier.car_speed : tier.truck_speed;
    for (std::size_t m = 0; m < spec.counts[c]; ++m) {
      SynthManeuver man;
      man.vehicle_id = next_id++;
      man.label = label;
      man.duration_s = rng.uniform(tier.duration_min_s, tier.duration_max_s);
      man.speed = base + rng.uniform(-spec.speed_spread, spec.speed_spread);
      // Crossing time off the frame grid, so the lane flips on exactly one frame.
      const double tc = static_cast<double>(spec.cbt_min_frame) - 1.0 +
                        static_cast<double>(rng.below(spec.cbt_max_frame - spec.cbt_min_frame + 1)) +
                        rng.uniform(0.1, 0.9);
      const double tau = man.duration_s / kLogisticSpan * kFrameRateHz;  // frames
      const bool left = label.direction == Direction::kLeft;
      const double y0 = left ? 1.5 * w : 2.5 * w;
      const double dy = left ? w : -w;
      const bool mirrored = rng.uniform() < spec.direction2_fraction;

      Track track;
      track.id = man.vehicle_id;
      track.vehicle = label.vehicle;
      track.driving_direction = mirrored ? 2 : 1;
      track.samples.reserve(spec.frames_per_track);
      double x = rng.uniform(0.0, 50.0);
      int prev_lane = lane_of(y0, w);
      for (std::size_t f = 0; f < spec.frames_per_track; ++f) {
        const double s = 1.0 / (1.0 + std::exp(-(static_cast<double>(f) - tc) / tau));
        TrackSample p;
        p.frame = static_cast<std::int64_t>(f);
        p.x = x;
        p.y = y0 + dy * s;
        p.vx = man.speed + spec.speed_jitter * rng.normal();
        p.vy = dy * s * (1.0 - s) / tau * kFrameRateHz;
        p.lane = lane_of(p.y, w);
        if (p.lane != prev_lane) man.cbt_frame = p.frame;
        prev_lane = p.lane;
        x += p.vx * dt;
        track.samples.push_back(p);
      }
      if (mirrored)
        for (auto& p : track.samples) {
          p.x = -p.x;
          p.y = -p.y;
          p.vx = -p.vx;
          p.vy = -p.vy;
        }
      out.raw.tracks.push_back(std::move(track));
      out.truth.push_back(man);
    }
  }
  return out;
}

void write_truth(const std::filesystem::path& path, std::span<const SynthManeuver> truth) {
  std::string text(kTruthHeader);
  text += '\n';
  for (const auto& m : truth)
    text += std::to_string(m.vehicle_id) + ',' + std::to_string(m.cbt_frame) + ',' +
            m.label.to_string() + ',' + format_double(m.duration_s) + ',' +
            format_double(m.speed) + '\n';
  write_file_atomic(path, text);
}

std::vector<SynthManeuver> read_truth(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  const std::string src = path.string();
  std::string line;
  std::size_t line_no = 0;
  std::vector<SynthManeuver> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    if (out.empty() && csv::trim(line) == kTruthHeader) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw FormatError(src + ":" + std::to_string(line_no) + ": expected 5 fields");
    SynthManeuver m;
    m.vehicle_id = csv::parse_int(f[0], src, line_no, "vehicle_id");
    m.cbt_frame = csv::parse_int(f[1], src, line_no, "cbt_frame");
    m.label = ConditionLabel::parse(f[2]);
    m.duration_s = csv::parse_double(f[3], src, line_no, "duration_s");
    m.speed = csv::parse_double(f[4], src, line_no, "speed");
    out.push_back(m);
  }
  return out;
}

Corpus ground_truth_corpus(const SynthResult& synth, std::size_t downsample_factor) {
  const TrackTable canonical = canonicalize_frame(synth.raw);
  std::map<std::int64_t, const Track*> by_id;
  for (const auto& t : canonical.tracks) by_id[t.id] = &t;

  Corpus corpus;
  corpus.method = ExtractionMethod::kFixed150;
  std::vector<RatioSample> samples;
  for (const auto& m : synth.truth) {
    const auto it = by_id.find(m.vehicle_id);
    if (it == by_id.end())
      throw DataError("ground truth names vehicle " + std::to_string(m.vehicle_id) +
                      " which has no track");
    const Track& track = *it->second;
    const auto first = track.samples.front().frame;
    if (m.cbt_frame <= first || m.cbt_frame > track.samples.back().frame)
      throw DataError("ground truth CBT frame outside vehicle " + std::to_string(m.vehicle_id));
    const LaneChangeEvent ev{m.cbt_frame, static_cast<std::size_t>(m.cbt_frame - first),
                             m.label.direction};
    auto r = extract_fixed_window(track, ev, 75);
    if (!r.trajectory) {
      corpus.rejections.push_back({m.vehicle_id, m.cbt_frame, r.rejection});
      continue;
    }
    LabeledTrajectory item;
    item.label = m.label;
    item.speed_ratio = compute_speed_ratio(*r.trajectory);
    item.trajectory = downsample(*r.trajectory, downsample_factor);
    samples.push_back({m.label.vehicle, item.speed_ratio});
    corpus.items.push_back(std::move(item));
  }
  corpus.stats = fit_speed_ratio_stats(samples);
  return corpus;
}

}  // namespace transfusor::data
