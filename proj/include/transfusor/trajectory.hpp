#pragma once
// Trajectories in metres, their increment encoding, and the per-axis
// standardization applied before the models see them.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace transfusor {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct TrajectorySource {
  std::int64_t vehicle_id = -1;
  std::int64_t cbt_frame = -1;
  std::int64_t start_frame = -1;
};

// Ordered 2-D positions. Velocities are optional; when present they have one
// entry per point.
struct Trajectory {
  std::vector<Point2> points;
  std::vector<double> vx, vy;
  double frame_rate_hz = 25.0;
  bool canonical = false;
  TrajectorySource source;

  std::size_t size() const { return points.size(); }
  bool has_velocities() const { return !vx.empty(); }
};

struct DeltaTrajectory {
  std::vector<Point2> increments;
  Point2 origin;
};

// Keeps points 0, factor, 2*factor, ... (150 frames -> 15 points at factor 10).
Trajectory downsample(const Trajectory& traj, std::size_t factor = 10);

DeltaTrajectory to_deltas(const Trajectory& traj);
// Running sum from the origin; the result has increments.size() + 1 points.
Trajectory from_deltas(const DeltaTrajectory& deltas);
Trajectory from_deltas(std::span<const Point2> increments, Point2 origin);

// Translates so the first point sits at (0, 0).
Trajectory origin_aligned(const Trajectory& traj);

// Per-axis mean/std of increments over a corpus.
struct NormalizationStats {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> std{1.0, 1.0};
  // Set when an axis had zero spread and its std was replaced by 1.
  std::array<bool, 2> degenerate{false, false};

  double normalize(double v, int axis) const { return (v - mean[axis]) / std[axis]; }
  double denormalize(double v, int axis) const { return v * std[axis] + mean[axis]; }

  // Flattened [T-1, 2] normalized increments.
  std::vector<double> normalize(const DeltaTrajectory& d) const;
  DeltaTrajectory denormalize(std::span<const double> flat, Point2 origin = {}) const;
};

// Population statistics over every increment of every trajectory.
NormalizationStats fit_normalization(std::span<const DeltaTrajectory> corpus);

}  // namespace transfusor
