#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "csv.hpp"
#include "transfusor/data.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/fileio.hpp"

namespace transfusor::data {
namespace {

constexpr std::array<std::string_view, 9> kColumns{
    "frame", "id", "x", "y", "xVelocity", "yVelocity", "laneId", "drivingDirection",
    "vehicleClass"};

VehicleClass parse_vehicle(std::string_view field, std::string_view source, std::size_t line) {
  std::string v(field);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "car" || v == "0") return VehicleClass::kCar;
  if (v == "truck" || v == "1") return VehicleClass::kTruck;
  throw FormatError(csv::where(source, line, "vehicleClass") + ": unknown vehicle class '" +
                    std::string(field) + "'");
}

}  // namespace

std::size_t TrackTable::rows() const {
  std::size_t n = 0;
  for (const auto& t : tracks) n += t.samples.size();
  return n;
}

TrackTable parse_tracks(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  // Header (skipping blank lines).
  while (std::getline(in, line)) {
    ++line_no;
    if (!csv::trim(line).empty()) break;
  }
  if (csv::trim(line).empty()) throw FormatError(std::string(source) + ": missing header row");
  const auto header = csv::split(line);
  std::array<std::size_t, kColumns.size()> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end())
      throw FormatError(std::string(source) + ": missing required column '" +
                        std::string(kColumns[c]) + "'");
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::map<std::int64_t, Track> by_id;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() < header.size())
      throw FormatError(std::string(source) + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
    TrackSample s;
    s.frame = csv::parse_int(f[col[0]], source, line_no, kColumns[0]);
    const std::int64_t id = csv::parse_int(f[col[1]], source, line_no, kColumns[1]);
    s.x = csv::parse_double(f[col[2]], source, line_no, kColumns[2]);
    s.y = csv::parse_double(f[col[3]], source, line_no, kColumns[3]);
    s.vx = csv::parse_double(f[col[4]], source, line_no, kColumns[4]);
    s.vy = csv::parse_double(f[col[5]], source, line_no, kColumns[5]);
    s.lane = static_cast<int>(csv::parse_int(f[col[6]], source, line_no, kColumns[6]));
    const auto dir = csv::parse_int(f[col[7]], source, line_no, kColumns[7]);
    const VehicleClass cls = parse_vehicle(f[col[8]], source, line_no);
    if (s.frame < 0)
      throw FormatError(csv::where(source, line_no, "frame") + ": negative frame");

    auto [it, fresh] = by_id.try_emplace(id);
    Track& t = it->second;
    if (fresh) {
      t.id = id;
      t.driving_direction = static_cast<int>(dir);
      t.vehicle = cls;
    } else {
      if (t.driving_direction != dir || t.vehicle != cls)
        throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": vehicle " +
                        std::to_string(id) + " changes direction or class");
      const std::int64_t prev = t.samples.back().frame;
      if (s.frame <= prev)
        throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": vehicle " +
                        std::to_string(id) + " frame " + std::to_string(s.frame) +
                        " does not follow frame " + std::to_string(prev));
      if (s.frame != prev + 1)
        throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": vehicle " +
                        std::to_string(id) + " skips frames " + std::to_string(prev + 1) +
                        ".." + std::to_string(s.frame - 1));
    }
    t.samples.push_back(s);
  }
  TrackTable table;
  table.tracks.reserve(by_id.size());
  for (auto& [id, t] : by_id) table.tracks.push_back(std::move(t));
  return table;
}

TrackTable ingest_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track file '" + path.string() + "'");
  return parse_tracks(in, path.string());
}

void write_tracks(std::ostream& out, const TrackTable& table) {
  out << "frame,id,x,y,xVelocity,yVelocity,laneId,drivingDirection,vehicleClass\n";
  for (const auto& t : table.tracks) {
    const char* cls = t.vehicle == VehicleClass::kCar ? "Car" : "Truck";
    for (const auto& s : t.samples)
      out << s.frame << ',' << t.id << ',' << csv::format_double(s.x) << ','
          << csv::format_double(s.y) << ',' << csv::format_double(s.vx) << ','
          << csv::format_double(s.vy) << ',' << s.lane << ',' << t.driving_direction << ','
          << cls << '\n';
  }
}

void write_tracks(const std::filesystem::path& path, const TrackTable& table) {
  std::ostringstream out;
  write_tracks(out, table);
  write_file_atomic(path, out.str());
}

void apply_frame_transform(Track& track, FrameConvention convention) {
  if (track.driving_direction != 1 && track.driving_direction != 2)
    throw DataError("vehicle " + std::to_string(track.id) + " has unknown driving direction " +
                    std::to_string(track.driving_direction));
  double sx = 1.0, sy = 1.0;
  if (convention == FrameConvention::kYUp) {
    if (track.driving_direction == 2) sx = sy = -1.0;
  } else {
    if (track.driving_direction == 1) sx = -1.0;
    else sy = -1.0;
  }
  for (auto& s : track.samples) {
    s.x *= sx;
    s.vx *= sx;
    s.y *= sy;
    s.vy *= sy;
  }
}

TrackTable canonicalize_frame(TrackTable table, FrameConvention convention) {
  for (auto& t : table.tracks) {
    if (t.canonical) continue;
    apply_frame_transform(t, convention);
    t.canonical = true;
  }
  return table;
}

std::vector<LaneChangeEvent> detect_cbt(const Track& track) {
  std::vector<LaneChangeEvent> out;
  const auto& s = track.samples;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].lane == s[i - 1].lane) continue;
    const std::size_t before = i - 1 >= kCbtSpan ? i - 1 - kCbtSpan : 0;
    const std::size_t after = std::min(s.size() - 1, i + kCbtSpan);
    const double dy = s[after].y - s[before].y;
    out.push_back({s[i].frame, i, dy > 0.0 ? Direction::kLeft : Direction::kRight});
  }
  return out;
}

}  // namespace transfusor::data
