#include "transfusor/trajectory.hpp"

#include <cmath>
#include <string>

#include "transfusor/errors.hpp"
#include "transfusor/log.hpp"

namespace transfusor {

Trajectory downsample(const Trajectory& traj, std::size_t factor) {
  if (factor == 0) throw UsageError("downsample factor must be >= 1");
  if (traj.size() < 2 || traj.size() < factor)
    throw UsageError("trajectory of " + std::to_string(traj.size()) +
                     " points is too short to downsample by " + std::to_string(factor));
  Trajectory out;
  out.frame_rate_hz = traj.frame_rate_hz / static_cast<double>(factor);
  out.canonical = traj.canonical;
  out.source = traj.source;
  for (std::size_t i = 0; i < traj.size(); i += factor) {
    out.points.push_back(traj.points[i]);
    if (traj.has_velocities()) {
      out.vx.push_back(traj.vx[i]);
      out.vy.push_back(traj.vy[i]);
    }
  }
  return out;
}

DeltaTrajectory to_deltas(const Trajectory& traj) {
  if (traj.size() < 2)
    throw UsageError("delta encoding needs at least 2 points, got " + std::to_string(traj.size()));
  DeltaTrajectory d;
  d.origin = traj.points.front();
  d.increments.reserve(traj.size() - 1);
  for (std::size_t i = 1; i < traj.size(); ++i)
    d.increments.push_back({traj.points[i].x - traj.points[i - 1].x,
                            traj.points[i].y - traj.points[i - 1].y});
  return d;
}

Trajectory from_deltas(std::span<const Point2> increments, Point2 origin) {
  Trajectory t;
  t.points.reserve(increments.size() + 1);
  t.points.push_back(origin);
  Point2 p = origin;
  for (const Point2& d : increments) {
    p.x += d.x;
    p.y += d.y;
    t.points.push_back(p);
  }
  t.canonical = true;
  return t;
}

Trajectory from_deltas(const DeltaTrajectory& deltas) {
  return from_deltas(deltas.increments, deltas.origin);
}

Trajectory origin_aligned(const Trajectory& traj) {
  Trajectory out = traj;
  if (traj.points.empty()) return out;
  const Point2 o = traj.points.front();
  for (Point2& p : out.points) {
    p.x -= o.x;
    p.y -= o.y;
  }
  return out;
}

std::vector<double> NormalizationStats::normalize(const DeltaTrajectory& d) const {
  std::vector<double> flat;
  flat.reserve(d.increments.size() * 2);
  for (const Point2& p : d.increments) {
    flat.push_back(normalize(p.x, 0));
    flat.push_back(normalize(p.y, 1));
  }
  return flat;
}

DeltaTrajectory NormalizationStats::denormalize(std::span<const double> flat, Point2 origin) const {
  if (flat.size() % 2 != 0) throw UsageError("normalized increments must come in (x, y) pairs");
  DeltaTrajectory d;
  d.origin = origin;
  d.increments.reserve(flat.size() / 2);
  for (std::size_t i = 0; i < flat.size(); i += 2)
    d.increments.push_back({denormalize(flat[i], 0), denormalize(flat[i + 1], 1)});
  return d;
}

NormalizationStats fit_normalization(std::span<const DeltaTrajectory> corpus) {
  std::size_t n = 0;
  std::array<double, 2> sum{0.0, 0.0};
  for (const auto& d : corpus)
    for (const Point2& p : d.increments) {
      sum[0] += p.x;
      sum[1] += p.y;
      ++n;
    }
  if (n == 0) throw UsageError("cannot fit normalization on an empty corpus");
  NormalizationStats s;
  s.mean = {sum[0] / static_cast<double>(n), sum[1] / static_cast<double>(n)};
  std::array<double, 2> sq{0.0, 0.0};
  for (const auto& d : corpus)
    for (const Point2& p : d.increments) {
      sq[0] += (p.x - s.mean[0]) * (p.x - s.mean[0]);
      sq[1] += (p.y - s.mean[1]) * (p.y - s.mean[1]);
    }
  for (int a = 0; a < 2; ++a) {
    s.std[a] = std::sqrt(sq[a] / static_cast<double>(n));
    if (!(s.std[a] > 0.0)) {
      s.std[a] = 1.0;
      s.degenerate[a] = true;
      log_warning(std::string("increment axis ") + (a == 0 ? "x" : "y") +
                  " has zero spread; using std 1");
    }
  }
  return s;
}

}  // namespace transfusor
