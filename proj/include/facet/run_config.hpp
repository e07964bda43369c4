#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace facet {

// Flat UTF-8 key=value settings. Blank lines and lines starting with '#' are ignored;
// keys outside the allowed set are rejected.
class RunConfig {
 public:
  RunConfig() = default;
  explicit RunConfig(std::set<std::string> allowed_keys) : allowed_(std::move(allowed_keys)) {}

  static RunConfig parse(const std::string& text, std::set<std::string> allowed_keys);
  static RunConfig load(const std::filesystem::path& path, std::set<std::string> allowed_keys);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  // Sorted "key=value\n" lines.
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::set<std::string> allowed_;
  std::map<std::string, std::string> values_;
};

}  // namespace facet
