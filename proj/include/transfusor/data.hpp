#pragma once
// Track ingestion, lane-change extraction, aggressiveness labelling, the
// synthetic track generator and corpus files.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "transfusor/labels.hpp"
#include "transfusor/rng.hpp"
#include "transfusor/trajectory.hpp"

namespace transfusor::data {

inline constexpr double kFrameRateHz = 25.0;

struct TrackSample {
  std::int64_t frame = 0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  int lane = 0;
};

struct Track {
  std::int64_t id = 0;
  int driving_direction = 1;  // 1 or 2
  VehicleClass vehicle = VehicleClass::kCar;
  bool canonical = false;
  std::vector<TrackSample> samples;  // frame-sorted, contiguous
};

struct TrackTable {
  std::vector<Track> tracks;  // ordered by vehicle id

  std::size_t vehicles() const { return tracks.size(); }
  std::size_t rows() const;
};

// Comma-separated with a header naming at least frame,id,x,y,xVelocity,
// yVelocity,laneId,drivingDirection,vehicleClass (any order, extra columns
// ignored). vehicleClass accepts Car/Truck (any case) or 0/1.
// FormatError names the line and column of a malformed field; DataError
// reports non-increasing or non-contiguous frames of one vehicle.
TrackTable parse_tracks(std::istream& in, std::string_view source = "<stream>");
TrackTable ingest_tracks(const std::filesystem::path& path);

// Inverse of parse_tracks (canonical or raw, as stored in the table).
void write_tracks(std::ostream& out, const TrackTable& table);
void write_tracks(const std::filesystem::path& path, const TrackTable& table);

// How drivingDirection maps raw coordinates to the canonical frame
// (travel +x, driver's left +y).
enum class FrameConvention {
  // y up; direction 1 already canonical, direction 2 rotated by 180 degrees.
  kYUp,
  // y down (image coordinates, HighD style); direction 1 travels -x.
  kYDown,
};

// The per-direction transform. Every variant is its own inverse.
void apply_frame_transform(Track& track, FrameConvention convention);

// Transforms every non-canonical track and marks it canonical.
// DataError on a direction code other than 1 or 2.
TrackTable canonicalize_frame(TrackTable table, FrameConvention convention = FrameConvention::kYUp);

struct LaneChangeEvent {
  std::int64_t frame = 0;  // first frame in the new lane
  std::size_t index = 0;   // sample index of that frame
  Direction direction = Direction::kLeft;
};

// One event per laneId transition, in frame order. The direction is the sign
// of the lateral displacement across the transition (+y is left), measured
// over up to kCbtSpan frames either side.
inline constexpr std::size_t kCbtSpan = 5;
std::vector<LaneChangeEvent> detect_cbt(const Track& track);

struct WindowResult {
  std::optional<Trajectory> trajectory;
  std::string rejection;  // set when trajectory is empty
};

// Frames [cbt - half, cbt + half - 1]; rejected when the track does not
// cover them all.
WindowResult extract_fixed_window(const Track& track, const LaneChangeEvent& cbt,
                                  std::size_t half_window);

inline constexpr std::size_t kStabilityFrames = 25;
inline constexpr double kStabilityThreshold = 0.2;  // m/s

struct DynamicWindow {
  Trajectory trajectory;
  std::size_t start_index = 0, end_index = 0;  // inclusive sample indices
  bool clamped_start = false, clamped_end = false;
};

// start: latest index <= cbt whose trailing 25-frame mean |v_y| is below
// 0.2 m/s; end: earliest index >= cbt whose leading 25-frame mean is below
// it. Missing endpoints clamp to the track edge and set the flag.
DynamicWindow extract_dynamic_window(const Track& track, const LaneChangeEvent& cbt);

// mean(|v_y|) / mean(|v_x|). DataError when the trajectory has no velocities
// or no longitudinal motion.
double compute_speed_ratio(const Trajectory& traj);

struct RatioMoments {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

// Speed-ratio moments per vehicle class (index = VehicleClass value).
struct SpeedRatioStats {
  std::array<RatioMoments, 2> by_class{};
  const RatioMoments& of(VehicleClass c) const { return by_class[static_cast<int>(c)]; }
};

struct RatioSample {
  VehicleClass vehicle = VehicleClass::kCar;
  double ratio = 0.0;
};

SpeedRatioStats fit_speed_ratio_stats(std::span<const RatioSample> samples);

// over if ratio > mean + sd, low if ratio < mean - sd, otherwise normal.
Aggressiveness label_aggressiveness(double ratio, const RatioMoments& stats);

enum class ExtractionMethod { kFixed150, kFixed300, kDynamic };
std::string_view to_string(ExtractionMethod m);
ExtractionMethod parse_extraction_method(std::string_view text);  // UsageError

struct LabeledTrajectory {
  Trajectory trajectory;
  ConditionLabel label;
  double speed_ratio = 0.0;
};

struct Rejection {
  std::int64_t vehicle_id = 0;
  std::int64_t cbt_frame = 0;
  std::string reason;
};

struct Corpus {
  ExtractionMethod method = ExtractionMethod::kFixed150;
  std::vector<LabeledTrajectory> items;
  SpeedRatioStats stats;
  std::vector<Rejection> rejections;

  std::size_t size() const { return items.size(); }
  std::vector<DeltaTrajectory> deltas() const;
  std::vector<ConditionLabel> labels() const;
  // Items of one category, origin-aligned.
  std::vector<Trajectory> category(const ConditionLabel& label) const;
};

struct ExtractOptions {
  ExtractionMethod method = ExtractionMethod::kFixed150;
  std::size_t downsample_factor = 10;  // fixed-150 only
  // Drop a maneuver whose window overlaps the previous kept one of the same
  // vehicle.
  bool exclude_overlapping = false;
};

// detect -> extract -> fit stats -> label -> downsample, over a canonical table.
Corpus extract_corpus(const TrackTable& canonical, const ExtractOptions& options = {});

// Counts and ratio moments per (direction, class) group and tier.
struct GroupSummary {
  std::array<std::size_t, 3> counts{};  // by Aggressiveness
  std::array<RatioMoments, 3> ratios{};
  std::size_t total = 0;
};

struct CorpusManifest {
  ExtractionMethod method = ExtractionMethod::kFixed150;
  // index = direction * 2 + class
  std::array<GroupSummary, 4> groups{};
  SpeedRatioStats stats;
  std::size_t total = 0;
  std::size_t rejections = 0;

  const GroupSummary& group(Direction d, VehicleClass c) const {
    return groups[static_cast<int>(d) * 2 + static_cast<int>(c)];
  }
};

CorpusManifest corpus_stats(const Corpus& corpus);

// Corpus directory layout:
//   trajectories.csv  traj_id,category_index,point_index,x,y
//   labels.csv        traj_id,category,speed_ratio,vehicle_id,cbt_frame,start_frame
//   rejections.csv    vehicle_id,cbt_frame,reason
//   manifest.txt      key = value
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Manifest text as written to manifest.txt; includes a content hash of the
// trajectory rows, so the fingerprint binds to the exact corpus.
std::string manifest_text(const Corpus& corpus);
std::string corpus_fingerprint(const Corpus& corpus);

// Parameters of the synthetic lane-change generator.
struct TierProfile {
  double duration_min_s = 4.0, duration_max_s = 6.0;  // lateral transition
  double car_speed = 26.0, truck_speed = 22.0;        // m/s
};

struct SynthSpec {
  std::array<std::size_t, kCategoryCount> counts{};  // maneuvers per category
  double lane_width = 3.5;
  std::size_t frames_per_track = 400;
  std::size_t cbt_min_frame = 160, cbt_max_frame = 200;
  double speed_spread = 0.5;   // +/- m/s around the tier speed
  double speed_jitter = 0.05;  // per-frame longitudinal velocity noise (sd)
  std::array<TierProfile, 3> tiers{
      TierProfile{7.0, 9.0, 32.0, 25.0},
      TierProfile{4.0, 6.0, 26.0, 22.0},
      TierProfile{2.0, 3.0, 20.0, 18.0},
  };
  // Fraction of tracks stored with drivingDirection 2 (mirrored raw frame).
  double direction2_fraction = 0.5;

  static SynthSpec uniform(std::size_t per_category);
  void validate() const;  // UsageError
};

// Flat key = value form used by the synth command.
SynthSpec parse_synth_spec(std::string_view text);
std::string synth_spec_text(const SynthSpec& spec);

struct SynthManeuver {
  std::int64_t vehicle_id = 0;
  std::int64_t cbt_frame = 0;
  ConditionLabel label;  // aggressiveness = generating tier
  double duration_s = 0.0;
  double speed = 0.0;
};

struct SynthResult {
  TrackTable raw;  // y-up convention, mixed driving directions
  std::vector<SynthManeuver> truth;
};

SynthResult synth_corpus(const SynthSpec& spec, SeededRng& rng);

void write_truth(const std::filesystem::path& path, std::span<const SynthManeuver> truth);
std::vector<SynthManeuver> read_truth(const std::filesystem::path& path);

// The ground-truth-tier corpus of a synthetic run: fixed-150 windows around
// the recorded CBTs, downsampled, labelled with the generating tier.
Corpus ground_truth_corpus(const SynthResult& synth, std::size_t downsample_factor = 10);

}  // namespace transfusor::data
