#include "transfusor/labels.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <vector>

#include "transfusor/errors.hpp"

namespace transfusor {

std::string_view to_string(Direction d) {
  return d == Direction::kLeft ? "left" : "right";
}

std::string_view to_string(VehicleClass c) {
  return c == VehicleClass::kCar ? "car" : "truck";
}

std::string_view to_string(Aggressiveness a) {
  switch (a) {
    case Aggressiveness::kLow: return "low";
    case Aggressiveness::kNormal: return "normal";
    case Aggressiveness::kOver: return "over";
  }
  return "?";
}

ConditionLabel ConditionLabel::from_index(std::size_t index) {
  if (index >= kCategoryCount)
    throw LabelError("category index " + std::to_string(index) + " out of range 0..11");
  ConditionLabel l;
  l.direction = static_cast<Direction>(index / 6);
  l.vehicle = static_cast<VehicleClass>((index / 3) % 2);
  l.aggressiveness = static_cast<Aggressiveness>(index % 3);
  return l;
}

namespace {

std::string valid_list() {
  std::string s;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    if (i) s += ", ";
    s += ConditionLabel::from_index(i).to_string();
  }
  return s;
}

[[noreturn]] void bad_label(std::string_view text) {
  throw LabelError("unknown category '" + std::string(text) + "'; valid: " + valid_list() +
                   " (or index 0..11)");
}

}  // namespace

ConditionLabel ConditionLabel::parse(std::string_view text) {
  std::size_t idx = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), idx);
  if (ec == std::errc() && ptr == text.data() + text.size() && !text.empty()) {
    if (idx >= kCategoryCount) bad_label(text);
    return from_index(idx);
  }

  std::optional<Direction> dir;
  std::optional<VehicleClass> cls;
  std::optional<Aggressiveness> agg;
  std::size_t start = 0;
  int parts = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('/', start);
    if (end == std::string_view::npos) end = text.size();
    std::string part(text.substr(start, end - start));
    std::transform(part.begin(), part.end(), part.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    ++parts;
    if (part == "left" && !dir) dir = Direction::kLeft;
    else if (part == "right" && !dir) dir = Direction::kRight;
    else if (part == "car" && !cls) cls = VehicleClass::kCar;
    else if (part == "truck" && !cls) cls = VehicleClass::kTruck;
    else if ((part == "low" || part == "less") && !agg) agg = Aggressiveness::kLow;
    else if (part == "normal" && !agg) agg = Aggressiveness::kNormal;
    else if (part == "over" && !agg) agg = Aggressiveness::kOver;
    else bad_label(text);
    start = end + 1;
  }
  if (parts != 3 || !dir || !cls || !agg) bad_label(text);
  return ConditionLabel{*dir, *cls, *agg};
}

std::string ConditionLabel::to_string() const {
  std::string s(transfusor::to_string(vehicle));
  s += '/';
  s += transfusor::to_string(direction);
  s += '/';
  s += transfusor::to_string(aggressiveness);
  return s;
}

std::array<ConditionLabel, kCategoryCount> report_order() {
  std::array<ConditionLabel, kCategoryCount> out{};
  std::size_t i = 0;
  for (auto v : {VehicleClass::kCar, VehicleClass::kTruck})
    for (auto d : {Direction::kLeft, Direction::kRight})
      for (auto a : {Aggressiveness::kLow, Aggressiveness::kNormal, Aggressiveness::kOver})
        out[i++] = ConditionLabel{d, v, a};
  return out;
}

}  // namespace transfusor
