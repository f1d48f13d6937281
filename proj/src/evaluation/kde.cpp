#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "transfusor/errors.hpp"
#include "transfusor/evaluation.hpp"
#include "transfusor/log.hpp"

namespace transfusor::eval {
namespace {

double sample_std(std::span<const Point2> pts, double Point2::*axis) {
  double mean = 0.0;
  for (const auto& p : pts) mean += p.*axis;
  mean /= static_cast<double>(pts.size());
  double sq = 0.0;
  for (const auto& p : pts) sq += (p.*axis - mean) * (p.*axis - mean);
  return std::sqrt(sq / static_cast<double>(pts.size() - 1));
}

// Gaussian kernel values of every point at every cell centre along one axis.
std::vector<double> axis_kernel(std::span<const Point2> pts, double Point2::*axis, double lo,
                                double step, std::size_t cells, double h) {
  std::vector<double> k(pts.size() * cells);
  const double norm = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t c = 0; c < cells; ++c) {
      const double u = (lo + (static_cast<double>(c) + 0.5) * step - pts[i].*axis) / h;
      k[i * cells + c] = norm * std::exp(-0.5 * u * u);
    }
  return k;
}

}  // namespace

double KdeGrid::integral() const {
  double s = 0.0;
  for (double d : density) s += d;
  return s * dx() * dy();
}

double KdeGrid::peak() const {
  return density.empty() ? 0.0 : *std::max_element(density.begin(), density.end());
}

std::vector<std::pair<std::size_t, std::size_t>> KdeGrid::local_maxima() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double v = at(ix, iy);
      bool top = v > 0.0;
      for (int oy = -1; oy <= 1 && top; ++oy)
        for (int ox = -1; ox <= 1 && top; ++ox) {
          if (!ox && !oy) continue;
          const auto jx = static_cast<std::ptrdiff_t>(ix) + ox;
          const auto jy = static_cast<std::ptrdiff_t>(iy) + oy;
          if (jx < 0 || jy < 0 || jx >= static_cast<std::ptrdiff_t>(nx) ||
              jy >= static_cast<std::ptrdiff_t>(ny))
            continue;
          if (at(static_cast<std::size_t>(jx), static_cast<std::size_t>(jy)) >= v) top = false;
        }
      if (top) out.emplace_back(ix, iy);
    }
  return out;
}

KdeGrid kde_grid(std::span<const Point2> points, const KdeOptions& options) {
  if (points.size() < 2) throw UsageError("KDE needs at least two points");
  if (options.nx == 0 || options.ny == 0) throw UsageError("KDE grid needs at least one cell per axis");
  const double n = static_cast<double>(points.size());
  const double scott = std::pow(n, -1.0 / 6.0);
  auto bandwidth = [&](const std::optional<double>& given, double Point2::*axis, const char* name) {
    double h = given ? *given : scott * sample_std(points, axis);
    if (!(h >= options.bandwidth_floor)) {
      log_warning(std::string("KDE bandwidth on ") + name + " below floor; using " +
                  std::to_string(options.bandwidth_floor));
      h = options.bandwidth_floor;
    }
    return h;
  };
  KdeGrid g;
  g.nx = options.nx;
  g.ny = options.ny;
  g.points = points.size();
  g.bandwidth_x = bandwidth(options.bandwidth_x, &Point2::x, "x");
  g.bandwidth_y = bandwidth(options.bandwidth_y, &Point2::y, "y");
  if (options.extents) {
    const auto& e = *options.extents;
    if (!(e[1] > e[0] && e[3] > e[2])) throw UsageError("KDE extents must be increasing");
    g.x_min = e[0];
    g.x_max = e[1];
    g.y_min = e[2];
    g.y_max = e[3];
  } else {
    auto [xlo, xhi] = std::minmax_element(points.begin(), points.end(),
                                          [](const Point2& a, const Point2& b) { return a.x < b.x; });
    auto [ylo, yhi] = std::minmax_element(points.begin(), points.end(),
                                          [](const Point2& a, const Point2& b) { return a.y < b.y; });
    const double px = options.padding_bandwidths * g.bandwidth_x;
    const double py = options.padding_bandwidths * g.bandwidth_y;
    g.x_min = xlo->x - px;
    g.x_max = xhi->x + px;
    g.y_min = ylo->y - py;
    g.y_max = yhi->y + py;
  }
  const auto kx = axis_kernel(points, &Point2::x, g.x_min, g.dx(), g.nx, g.bandwidth_x);
  const auto ky = axis_kernel(points, &Point2::y, g.y_min, g.dy(), g.ny, g.bandwidth_y);
  g.density.assign(g.nx * g.ny, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double* rx = kx.data() + i * g.nx;
    const double* ry = ky.data() + i * g.ny;
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
      const double wy = ry[iy];
      if (wy == 0.0) continue;
      double* row = g.density.data() + iy * g.nx;
      for (std::size_t ix = 0; ix < g.nx; ++ix) row[ix] += wy * rx[ix];
    }
  }
  for (double& d : g.density) d /= n;
  return g;
}

std::vector<Point2> pooled_points(std::span<const Trajectory> trajectories) {
  std::vector<Point2> out;
  for (const auto& t : trajectories) out.insert(out.end(), t.points.begin(), t.points.end());
  return out;
}

}  // namespace transfusor::eval
