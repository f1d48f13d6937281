#pragma once
// Flat "key = value" text used for run configs, manifests and checkpoint
// metadata. '#' starts a comment line; keys keep insertion order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace transfusor {

class KeyValues {
 public:
  KeyValues() = default;

  // ConfigError names the source and line of a malformed entry or a
  // duplicate key.
  static KeyValues parse(std::string_view text, std::string_view source = "<text>");
  static KeyValues load(const std::filesystem::path& path);

  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  // Missing keys and unparsable values raise ConfigError.
  std::string get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  double get_double(std::string_view key, double fallback) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  std::string get(std::string_view key, std::string fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  // Replaces an existing value in place or appends.
  void set(std::string_view key, std::string value);
  void set(std::string_view key, double value);
  void set(std::string_view key, std::uint64_t value);
  void set(std::string_view key, std::int64_t value);
  void set(std::string_view key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set_bool(std::string_view key, bool value);

  // Applies every entry of `other` over this one.
  void merge(const KeyValues& other);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace transfusor
