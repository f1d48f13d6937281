#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "transfusor/data.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/evaluation.hpp"
#include "transfusor/fileio.hpp"
#include "transfusor/config.hpp"

namespace transfusor::eval {

double ade(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size())
    throw UsageError("ADE needs equal lengths, got " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  if (a.size() == 0) throw UsageError("ADE of empty trajectories");
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double dx = a.points[t].x - b.points[t].x;
    const double dy = a.points[t].y - b.points[t].y;
    total += std::sqrt(dx * dx + dy * dy);
  }
  return total / static_cast<double>(a.size());
}

double mean_pairwise_ade(std::span<const Trajectory> set) {
  if (set.size() < 2) throw UsageError("pairwise ADE needs at least two trajectories");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = i + 1; j < set.size(); ++j) total += ade(set[i], set[j]);
  const double n = static_cast<double>(set.size());
  return total / (n * (n - 1.0) / 2.0);
}

std::vector<Coverage> coverage(std::span<const Trajectory> dataset,
                               std::span<const Trajectory> generated,
                               std::span<const double> thetas) {
  if (dataset.empty()) throw CoverageError("coverage undefined: empty dataset set");
  if (generated.empty()) throw CoverageError("coverage undefined: empty generated set");
  // Nearest-neighbour ADE from each side; a match exists iff the minimum is below theta.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best_d(dataset.size(), inf), best_g(generated.size(), inf);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t j = 0; j < generated.size(); ++j) {
      const double e = ade(dataset[i], generated[j]);
      best_d[i] = std::min(best_d[i], e);
      best_g[j] = std::min(best_g[j], e);
    }
  std::vector<Coverage> out;
  out.reserve(thetas.size());
  for (double theta : thetas) {
    Coverage c;
    c.n_dataset = dataset.size();
    c.n_generated = generated.size();
    const auto hits = [theta](const std::vector<double>& v) {
      return static_cast<double>(std::count_if(v.begin(), v.end(), [theta](double e) { return e < theta; }));
    };
    c.c1 = hits(best_d) / static_cast<double>(dataset.size());
    c.c2 = hits(best_g) / static_cast<double>(generated.size());
    out.push_back(c);
  }
  return out;
}

Coverage coverage(std::span<const Trajectory> dataset, std::span<const Trajectory> generated,
                  double theta) {
  return coverage(dataset, generated, std::span<const double>(&theta, 1)).front();
}

std::size_t default_generated_count(std::size_t category_size) {
  return std::max<std::size_t>(50, category_size);
}

CoverageReport table2_report(const data::Corpus& corpus, const std::string& method,
                             const CategorySampler& sampler, const ReportOptions& options) {
  if (options.thresholds.empty()) throw UsageError("coverage report needs at least one threshold");
  for (double t : options.thresholds)
    if (!(t > 0.0)) throw UsageError("coverage thresholds must be positive");
  CoverageReport report;
  report.method = method;
  for (const auto& label : report_order()) {
    const auto reference = corpus.category(label);
    if (reference.empty()) {
      for (double t : options.thresholds) report.rows.push_back({label, t, std::nullopt});
      continue;
    }
    const std::size_t n =
        options.n_generated ? options.n_generated : default_generated_count(reference.size());
    std::vector<Trajectory> samples = sampler(label, n);
    for (auto& s : samples) s = origin_aligned(s);
    const auto values = coverage(reference, samples, options.thresholds);
    for (std::size_t i = 0; i < values.size(); ++i)
      report.rows.push_back({label, options.thresholds[i], values[i]});
  }
  return report;
}

std::string report_csv(std::span<const CoverageReport> reports) {
  std::string out =
      "method,vehicle,direction,aggressiveness,threshold_m,c1,c2,n_dataset,n_generated\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows) {
      out += r.method + ',' + std::string(to_string(row.label.vehicle)) + ',' +
             std::string(to_string(row.label.direction)) + ',' +
             std::string(to_string(row.label.aggressiveness)) + ',' +
             format_double(row.threshold) + ',';
      if (row.value)
        out += format_double(row.value->c1) + ',' + format_double(row.value->c2) + ',' +
               std::to_string(row.value->n_dataset) + ',' + std::to_string(row.value->n_generated);
      else
        out += "NA,NA,0,0";
      out += '\n';
    }
  return out;
}

void write_report(const std::filesystem::path& path, std::span<const CoverageReport> reports) {
  write_file_atomic(path, report_csv(reports));
}

}  // namespace transfusor::eval
