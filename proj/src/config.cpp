#include "pogp/config.hpp"

#include <fstream>
#include <sstream>

namespace pogp {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError,
                "malformed JSON in " + path.string() + " at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

ConfigSection::ConfigSection(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) {
    throw Error(ErrorKind::ConfigError, "config section '" + (path_.empty() ? "<root>" : path_) + "' must be an object");
  }
}

bool ConfigSection::has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

std::string ConfigSection::key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

ConfigSection ConfigSection::child(const std::string& key) {
  seen_.insert(key);
  return ConfigSection(j_.at(key), key_path(key));
}

const nlohmann::json& ConfigSection::raw(const std::string& key) {
  seen_.insert(key);
  return j_.at(key);
}

void ConfigSection::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (!seen_.count(key)) throw Error(ErrorKind::ConfigError, "unknown config key '" + key_path(key) + "'");
  }
}

void ConfigSection::fail(const std::string& key, const std::string& message) const {
  throw Error(ErrorKind::ConfigError, "config key '" + key_path(key) + "': " + message);
}

std::uint64_t config_hash(const nlohmann::json& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pogp
