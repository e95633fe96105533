#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rbo {

// Flat `key = value` text. Blank lines and lines starting with '#' are
// skipped. Typed getters throw ConfigError naming the key.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  std::optional<std::string> raw(std::string_view key) const;
  void set(std::string key, std::string value);

  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  // Throws ConfigError for the first key not in `known`.
  void reject_unknown(const std::set<std::string, std::less<>>& known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// 64-bit FNV-1a of `bytes`, as 16 lowercase hex digits.
std::string content_digest(std::string_view bytes);

}  // namespace rbo
