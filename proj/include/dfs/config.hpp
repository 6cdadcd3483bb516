#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfs/grid.hpp"

namespace dfs::cli {

// Strict JSON object reader: every accepted key is consumed and finish()
// rejects whatever is left, so configs with unknown keys fail loudly.
// Holds its own copy of the object, so nested readers built from
// get_object() temporaries stay valid.
class ConfigReader {
 public:
  ConfigReader(nlohmann::json object, std::string context);

  bool has(const std::string& key) const;

  double get_double(const std::string& key, double fallback);
  double require_double(const std::string& key);
  int64_t get_int(const std::string& key, int64_t fallback);
  uint64_t get_u64(const std::string& key, uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback);
  std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> fallback);
  std::optional<double> get_optional_double(const std::string& key);
  GridDims get_dims(const std::string& key, GridDims fallback);
  nlohmann::json get_object(const std::string& key);  // {} when absent

  // throws on keys never consumed
  void finish() const;

 private:
  const nlohmann::json& lookup(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  nlohmann::json object_;
  std::string context_;
  std::set<std::string> consumed_;
};

}  // namespace dfs::cli
