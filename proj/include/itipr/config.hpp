#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "itipr/pipeline.hpp"

namespace itipr {

// Minimal reader for the `key = value` config format with [section] tables.
// Values: integers, floats, booleans, strings ("quoted" or bare). Comments
// start with '#'. Keys are addressed as "section.name".
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

// Defaults overridden by the file (empty path = pure defaults), then by the
// ITIPR_DATA_PATH / ITIPR_OUT_DIR environment variables (paths only).
PipelineConfig load_pipeline_config(const std::string& path);

// Canonical json echo embedded in run reports.
std::string pipeline_config_to_json(const PipelineConfig& cfg);

}  // namespace itipr
