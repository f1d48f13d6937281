#include <string>

#include "transfusor/config.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/evaluation.hpp"
#include "transfusor/fileio.hpp"

namespace transfusor::eval {

std::string trajectories_csv(std::span<const LabeledSet> sets) {
  std::string out = "traj_id,category_index,point_index,x,y\n";
  std::size_t id = 0;
  for (const auto& set : sets) {
    const std::string cat = std::to_string(set.label.index());
    for (const auto& t : set.trajectories) {
      for (std::size_t p = 0; p < t.points.size(); ++p)
        out += std::to_string(id) + ',' + cat + ',' + std::to_string(p) + ',' +
               format_double(t.points[p].x) + ',' + format_double(t.points[p].y) + '\n';
      ++id;
    }
  }
  return out;
}

void write_trajectories(const std::filesystem::path& path, std::span<const LabeledSet> sets) {
  write_file_atomic(path, trajectories_csv(sets));
}

std::vector<std::filesystem::path> write_category_files(const std::filesystem::path& dir,
                                                        const std::string& prefix,
                                                        std::span<const LabeledSet> sets) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& l = sets[i].label;
    const auto path = dir / (prefix + "_" + std::to_string(l.index()) + "_" +
                             std::string(to_string(l.vehicle)) + "_" +
                             std::string(to_string(l.direction)) + "_" +
                             std::string(to_string(l.aggressiveness)) + ".csv");
    write_trajectories(path, sets.subspan(i, 1));
    written.push_back(path);
  }
  return written;
}

std::string kde_csv(const KdeGrid& grid, std::size_t step, std::size_t k) {
  std::string out = "# x_min=" + format_double(grid.x_min) + " x_max=" + format_double(grid.x_max) +
                    " y_min=" + format_double(grid.y_min) + " y_max=" + format_double(grid.y_max) +
                    " nx=" + std::to_string(grid.nx) + " ny=" + std::to_string(grid.ny) +
                    " bandwidth_x=" + format_double(grid.bandwidth_x) +
                    " bandwidth_y=" + format_double(grid.bandwidth_y) +
                    " points=" + std::to_string(grid.points) + "\n";
  out += "step,k,x,y,density\n";
  const std::string prefix = std::to_string(step) + ',' + std::to_string(k) + ',';
  for (std::size_t iy = 0; iy < grid.ny; ++iy)
    for (std::size_t ix = 0; ix < grid.nx; ++ix)
      out += prefix + format_double(grid.x_center(ix)) + ',' + format_double(grid.y_center(iy)) +
             ',' + format_double(grid.at(ix, iy)) + '\n';
  return out;
}

void write_kde(const std::filesystem::path& path, const KdeGrid& grid, std::size_t step,
               std::size_t k) {
  write_file_atomic(path, kde_csv(grid, step, k));
}

}  // namespace transfusor::eval
