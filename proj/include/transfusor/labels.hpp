#pragma once
// The twelve lane-change categories used as the conditioning signal.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace transfusor {

enum class Direction { kLeft = 0, kRight = 1 };
enum class VehicleClass { kCar = 0, kTruck = 1 };
enum class Aggressiveness { kLow = 0, kNormal = 1, kOver = 2 };

inline constexpr std::size_t kCategoryCount = 12;

std::string_view to_string(Direction d);
std::string_view to_string(VehicleClass c);
std::string_view to_string(Aggressiveness a);

// (direction, vehicle class, aggressiveness) with the stable index
// direction * 6 + class * 3 + aggressiveness.
struct ConditionLabel {
  Direction direction = Direction::kLeft;
  VehicleClass vehicle = VehicleClass::kCar;
  Aggressiveness aggressiveness = Aggressiveness::kNormal;

  std::size_t index() const {
    return static_cast<std::size_t>(direction) * 6 +
           static_cast<std::size_t>(vehicle) * 3 +
           static_cast<std::size_t>(aggressiveness);
  }

  // Throws LabelError for index >= 12.
  static ConditionLabel from_index(std::size_t index);

  // Accepts "car/left/normal" (any order of the three parts, case-insensitive,
  // "less" as an alias of "low") or a bare index "0".."11".
  static ConditionLabel parse(std::string_view text);

  // "car/left/normal"
  std::string to_string() const;

  friend bool operator==(const ConditionLabel&, const ConditionLabel&) = default;
};

// Categories in report order: vehicle, then direction, then aggressiveness.
std::array<ConditionLabel, kCategoryCount> report_order();

}  // namespace transfusor
