#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pogp/errors.hpp"

namespace pogp {

/// Parses a JSON file; ConfigError messages carry the byte offset of a syntax error.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Strict reader over one JSON object. Type mismatches and unknown keys raise
/// ConfigError naming the dotted key path.
class ConfigSection {
 public:
  ConfigSection(const nlohmann::json& j, std::string path);

  bool has(const std::string& key) const;

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ConfigError, "config key '" + key_path(key) + "': " + e.what());
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw Error(ErrorKind::ConfigError, "config key '" + key_path(key) + "' is required");
    T out{};
    get(key, out);
    return out;
  }

  ConfigSection child(const std::string& key);
  const nlohmann::json& raw(const std::string& key);
  std::string key_path(const std::string& key) const;

  /// Throws ConfigError on the first key that was never read.
  void finish() const;

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// FNV-1a over the compact dump, stable across runs and platforms.
std::uint64_t config_hash(const nlohmann::json& config);

}  // namespace pogp
