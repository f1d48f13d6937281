#include <cstdio>
#include <filesystem>
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

constexpr std::string_view kTrajHeader = "traj_id,category_index,point_index,x,y";
constexpr std::string_view kLabelHeader =
    "traj_id,category,speed_ratio,vehicle_id,cbt_frame,start_frame";
constexpr std::string_view kRejectHeader = "vehicle_id,cbt_frame,reason";

std::string trajectories_csv(const Corpus& corpus) {
  std::string out(kTrajHeader);
  out += '\n';
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& item = corpus.items[i];
    const std::string prefix =
        std::to_string(i) + ',' + std::to_string(item.label.index()) + ',';
    for (std::size_t p = 0; p < item.trajectory.points.size(); ++p) {
      const Point2 pt = item.trajectory.points[p];
      out += prefix;
      out += std::to_string(p);
      out += ',';
      out += format_double(pt.x);
      out += ',';
      out += format_double(pt.y);
      out += '\n';
    }
  }
  return out;
}

std::string labels_csv(const Corpus& corpus) {
  std::string out(kLabelHeader);
  out += '\n';
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& item = corpus.items[i];
    const auto& src = item.trajectory.source;
    out += std::to_string(i) + ',' + item.label.to_string() + ',' +
           format_double(item.speed_ratio) + ',' + std::to_string(src.vehicle_id) + ',' +
           std::to_string(src.cbt_frame) + ',' + std::to_string(src.start_frame) + '\n';
  }
  return out;
}

std::string rejections_csv(const Corpus& corpus) {
  std::string out(kRejectHeader);
  out += '\n';
  for (const auto& r : corpus.rejections) {
    std::string reason = r.reason;
    for (char& c : reason)
      if (c == ',' || c == '\n') c = ';';
    out += std::to_string(r.vehicle_id) + ',' + std::to_string(r.cbt_frame) + ',' + reason + '\n';
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!csv::trim(line).empty()) out.push_back(line);
  return out;
}

void expect_header(const std::vector<std::string>& lines, std::string_view header,
                   const std::filesystem::path& path) {
  if (lines.empty() || csv::trim(lines.front()) != header)
    throw FormatError(path.string() + ": expected header '" + std::string(header) + "'");
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string manifest_text(const Corpus& corpus) {
  const CorpusManifest m = corpus_stats(corpus);
  KeyValues kv;
  kv.set("format", std::uint64_t{1});
  kv.set("method", std::string(to_string(m.method)));
  kv.set("trajectories", std::uint64_t{m.total});
  kv.set("rejections", std::uint64_t{m.rejections});
  const double rate = corpus.items.empty() ? kFrameRateHz : corpus.items.front().trajectory.frame_rate_hz;
  kv.set("frame_rate_hz", rate);
  for (auto cls : {VehicleClass::kCar, VehicleClass::kTruck}) {
    const std::string p = "stats." + std::string(to_string(cls));
    kv.set(p + ".count", std::uint64_t{m.stats.of(cls).count});
    kv.set(p + ".mean", m.stats.of(cls).mean);
    kv.set(p + ".std", m.stats.of(cls).stddev);
  }
  for (auto dir : {Direction::kLeft, Direction::kRight})
    for (auto cls : {VehicleClass::kCar, VehicleClass::kTruck}) {
      const auto& g = m.group(dir, cls);
      const std::string p =
          "group." + std::string(to_string(dir)) + "." + std::string(to_string(cls));
      for (auto a : {Aggressiveness::kLow, Aggressiveness::kNormal, Aggressiveness::kOver}) {
        const int ai = static_cast<int>(a);
        const std::string q = p + "." + std::string(to_string(a));
        kv.set(q + ".count", std::uint64_t{g.counts[ai]});
        kv.set(q + ".ratio_mean", g.ratios[ai].mean);
        kv.set(q + ".ratio_std", g.ratios[ai].stddev);
      }
      kv.set(p + ".total", std::uint64_t{g.total});
    }
  kv.set("total", std::uint64_t{m.total});
  const std::uint64_t content = fnv1a64(labels_csv(corpus), fnv1a64(trajectories_csv(corpus)));
  kv.set("content_fnv1a64", hex64(content));
  return kv.text();
}

std::string corpus_fingerprint(const Corpus& corpus) {
  return hex64(fnv1a64(manifest_text(corpus)));
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory '" + dir.string() + "': " + ec.message());
  write_file_atomic(dir / "trajectories.csv", trajectories_csv(corpus));
  write_file_atomic(dir / "labels.csv", labels_csv(corpus));
  write_file_atomic(dir / "rejections.csv", rejections_csv(corpus));
  write_file_atomic(dir / "manifest.txt", "# lane-change corpus\n" + manifest_text(corpus));
}

Corpus read_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("corpus directory '" + dir.string() + "' does not exist");
  const KeyValues manifest = KeyValues::load(dir / "manifest.txt");
  Corpus corpus;
  corpus.method = parse_extraction_method(manifest.get("method"));
  const double rate = manifest.get_double("frame_rate_hz");
  for (auto cls : {VehicleClass::kCar, VehicleClass::kTruck}) {
    const std::string p = "stats." + std::string(to_string(cls));
    auto& m = corpus.stats.by_class[static_cast<int>(cls)];
    m.count = manifest.get_uint(p + ".count");
    m.mean = manifest.get_double(p + ".mean");
    m.stddev = manifest.get_double(p + ".std");
  }

  const auto traj_path = dir / "trajectories.csv";
  const auto tlines = lines_of(read_file(traj_path));
  expect_header(tlines, kTrajHeader, traj_path);
  const std::string tsrc = traj_path.string();
  for (std::size_t i = 1; i < tlines.size(); ++i) {
    const auto f = csv::split(tlines[i]);
    if (f.size() != 5)
      throw FormatError(tsrc + ":" + std::to_string(i + 1) + ": expected 5 fields");
    const auto id = static_cast<std::size_t>(csv::parse_int(f[0], tsrc, i + 1, "traj_id"));
    const auto cat = static_cast<std::size_t>(csv::parse_int(f[1], tsrc, i + 1, "category_index"));
    const auto point = static_cast<std::size_t>(csv::parse_int(f[2], tsrc, i + 1, "point_index"));
    const double x = csv::parse_double(f[3], tsrc, i + 1, "x");
    const double y = csv::parse_double(f[4], tsrc, i + 1, "y");
    if (id == corpus.items.size()) {
      LabeledTrajectory item;
      item.label = ConditionLabel::from_index(cat);
      item.trajectory.frame_rate_hz = rate;
      item.trajectory.canonical = true;
      corpus.items.push_back(std::move(item));
    } else if (id + 1 != corpus.items.size()) {
      throw FormatError(tsrc + ":" + std::to_string(i + 1) + ": trajectory ids must be consecutive");
    }
    auto& item = corpus.items.back();
    if (item.label.index() != cat)
      throw FormatError(tsrc + ":" + std::to_string(i + 1) + ": category changes within trajectory");
    if (point != item.trajectory.points.size())
      throw FormatError(tsrc + ":" + std::to_string(i + 1) + ": point indices must be consecutive");
    item.trajectory.points.push_back({x, y});
  }

  const auto label_path = dir / "labels.csv";
  const auto llines = lines_of(read_file(label_path));
  expect_header(llines, kLabelHeader, label_path);
  if (llines.size() - 1 != corpus.items.size())
    throw FormatError(label_path.string() + ": " + std::to_string(llines.size() - 1) +
                      " rows for " + std::to_string(corpus.items.size()) + " trajectories");
  const std::string lsrc = label_path.string();
  for (std::size_t i = 1; i < llines.size(); ++i) {
    const auto f = csv::split(llines[i]);
    if (f.size() != 6) throw FormatError(lsrc + ":" + std::to_string(i + 1) + ": expected 6 fields");
    auto& item = corpus.items.at(static_cast<std::size_t>(csv::parse_int(f[0], lsrc, i + 1, "traj_id")));
    if (ConditionLabel::parse(f[1]) != item.label)
      throw FormatError(lsrc + ":" + std::to_string(i + 1) + ": category disagrees with trajectories.csv");
    item.speed_ratio = csv::parse_double(f[2], lsrc, i + 1, "speed_ratio");
    item.trajectory.source = {csv::parse_int(f[3], lsrc, i + 1, "vehicle_id"),
                              csv::parse_int(f[4], lsrc, i + 1, "cbt_frame"),
                              csv::parse_int(f[5], lsrc, i + 1, "start_frame")};
  }

  const auto rej_path = dir / "rejections.csv";
  if (std::filesystem::exists(rej_path)) {
    const auto rlines = lines_of(read_file(rej_path));
    expect_header(rlines, kRejectHeader, rej_path);
    const std::string rsrc = rej_path.string();
    for (std::size_t i = 1; i < rlines.size(); ++i) {
      const auto f = csv::split(rlines[i]);
      if (f.size() < 3) throw FormatError(rsrc + ":" + std::to_string(i + 1) + ": expected 3 fields");
      corpus.rejections.push_back({csv::parse_int(f[0], rsrc, i + 1, "vehicle_id"),
                                   csv::parse_int(f[1], rsrc, i + 1, "cbt_frame"),
                                   std::string(f[2])});
    }
  }
  if (manifest.get_uint("trajectories") != corpus.items.size())
    throw FormatError((dir / "manifest.txt").string() + ": trajectory count disagrees with files");
  return corpus;
}

}  // namespace transfusor::data
