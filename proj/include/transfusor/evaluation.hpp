#pragma once
// ADE, the coverage pair (c1 recall-like, c2 precision-like), per-category
// coverage reports, KDE density grids and the plain-text exports.

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "transfusor/labels.hpp"
#include "transfusor/trajectory.hpp"

namespace transfusor::data {
struct Corpus;
}

namespace transfusor::eval {

// Mean Euclidean distance between corresponding points. UsageError when the
// lengths differ or are zero.
double ade(const Trajectory& a, const Trajectory& b);

// Mean ADE over all unordered pairs; a spread measure for a sample set.
// UsageError with fewer than two trajectories.
double mean_pairwise_ade(std::span<const Trajectory> set);

struct Coverage {
  double c1 = 0.0;  // share of dataset trajectories matched by some sample
  double c2 = 0.0;  // share of samples matching some dataset trajectory
  std::size_t n_dataset = 0, n_generated = 0;
};

// Matching is ade < theta over every pair. CoverageError when either set is
// empty. Inputs are compared as given; align them to the origin first.
Coverage coverage(std::span<const Trajectory> dataset, std::span<const Trajectory> generated,
                  double theta);
// One pairwise pass for several thresholds.
std::vector<Coverage> coverage(std::span<const Trajectory> dataset,
                               std::span<const Trajectory> generated,
                               std::span<const double> thetas);

// Generated, origin-aligned trajectories for one category.
using CategorySampler =
    std::function<std::vector<Trajectory>(const ConditionLabel& label, std::size_t n)>;

struct CoverageRow {
  ConditionLabel label;
  double threshold = 0.0;
  std::optional<Coverage> value;  // empty: category has no dataset members
};

struct CoverageReport {
  std::string method;
  std::vector<CoverageRow> rows;  // report order, thresholds innermost
};

struct ReportOptions {
  std::vector<double> thresholds{0.5, 1.0};
  // Samples per category; 0 means max(50, category size).
  std::size_t n_generated = 0;
};

std::size_t default_generated_count(std::size_t category_size);

CoverageReport table2_report(const data::Corpus& corpus, const std::string& method,
                             const CategorySampler& sampler, const ReportOptions& options = {});

// method,vehicle,direction,aggressiveness,threshold_m,c1,c2,n_dataset,n_generated
std::string report_csv(std::span<const CoverageReport> reports);
void write_report(const std::filesystem::path& path, std::span<const CoverageReport> reports);

struct KdeOptions {
  std::size_t nx = 100, ny = 100;
  // Overrides of the per-axis Scott bandwidth.
  std::optional<double> bandwidth_x, bandwidth_y;
  // Grid spans the data bounds padded by this many bandwidths.
  double padding_bandwidths = 4.0;
  // Fixed extents (x_min, x_max, y_min, y_max) instead of data bounds.
  std::optional<std::array<double, 4>> extents;
  // Lower bound on a bandwidth when an axis has no spread.
  double bandwidth_floor = 1e-3;
};

struct KdeGrid {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  std::size_t nx = 0, ny = 0;
  double bandwidth_x = 0.0, bandwidth_y = 0.0;
  std::size_t points = 0;
  std::vector<double> density;  // row-major [ny][nx], evaluated at cell centres

  double dx() const { return (x_max - x_min) / static_cast<double>(nx); }
  double dy() const { return (y_max - y_min) / static_cast<double>(ny); }
  double x_center(std::size_t ix) const { return x_min + (static_cast<double>(ix) + 0.5) * dx(); }
  double y_center(std::size_t iy) const { return y_min + (static_cast<double>(iy) + 0.5) * dy(); }
  double at(std::size_t ix, std::size_t iy) const { return density[iy * nx + ix]; }
  double integral() const;
  double peak() const;
  // Cells whose density exceeds all eight neighbours.
  std::vector<std::pair<std::size_t, std::size_t>> local_maxima() const;
};

// Gaussian product-kernel KDE with per-axis Scott bandwidth n^(-1/6) sigma.
// UsageError for fewer than two points.
KdeGrid kde_grid(std::span<const Point2> points, const KdeOptions& options = {});

// Every point of every trajectory.
std::vector<Point2> pooled_points(std::span<const Trajectory> trajectories);

// traj_id,category_index,point_index,x,y; points are written as stored.
struct LabeledSet {
  ConditionLabel label;
  std::vector<Trajectory> trajectories;
};
std::string trajectories_csv(std::span<const LabeledSet> sets);
void write_trajectories(const std::filesystem::path& path, std::span<const LabeledSet> sets);
// One file per set: <dir>/<prefix>_<index>_<vehicle>_<direction>_<aggr>.csv
std::vector<std::filesystem::path> write_category_files(const std::filesystem::path& dir,
                                                        const std::string& prefix,
                                                        std::span<const LabeledSet> sets);

// "# x_min=... x_max=... y_min=... y_max=... nx=... ny=... bandwidth_x=...
// bandwidth_y=... points=..." then step,k,x,y,density rows.
std::string kde_csv(const KdeGrid& grid, std::size_t step, std::size_t k);
void write_kde(const std::filesystem::path& path, const KdeGrid& grid, std::size_t step,
               std::size_t k);

}  // namespace transfusor::eval
