#include "dfs/config.hpp"

#include <stdexcept>

namespace dfs::cli {

namespace {
const nlohmann::json kMissing;
}

ConfigReader::ConfigReader(nlohmann::json object, std::string context)
    : object_(std::move(object)), context_(std::move(context)) {
  if (!object_.is_object())
    throw std::invalid_argument("config " + context_ + ": expected a JSON object");
}

bool ConfigReader::has(const std::string& key) const { return object_.contains(key); }

const nlohmann::json& ConfigReader::lookup(const std::string& key) {
  consumed_.insert(key);
  const auto it = object_.find(key);
  return it == object_.end() ? kMissing : *it;
}

void ConfigReader::fail(const std::string& key, const std::string& why) const {
  throw std::invalid_argument("config " + context_ + "." + key + ": " + why);
}

double ConfigReader::get_double(const std::string& key, double fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_number()) fail(key, "expected a number");
  return j.get<double>();
}

double ConfigReader::require_double(const std::string& key) {
  const auto& j = lookup(key);
  if (j.is_null()) fail(key, "missing required key");
  if (!j.is_number()) fail(key, "expected a number");
  return j.get<double>();
}

int64_t ConfigReader::get_int(const std::string& key, int64_t fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_number_integer()) fail(key, "expected an integer");
  return j.get<int64_t>();
}

uint64_t ConfigReader::get_u64(const std::string& key, uint64_t fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<int64_t>() >= 0))
    fail(key, "expected a non-negative integer");
  return j.get<uint64_t>();
}

bool ConfigReader::get_bool(const std::string& key, bool fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_boolean()) fail(key, "expected a boolean");
  return j.get<bool>();
}

std::string ConfigReader::get_string(const std::string& key, const std::string& fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_string()) fail(key, "expected a string");
  return j.get<std::string>();
}

std::vector<double> ConfigReader::get_double_list(const std::string& key,
                                                  std::vector<double> fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_array()) fail(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& item : j) {
    if (!item.is_number()) fail(key, "expected an array of numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

std::vector<int64_t> ConfigReader::get_int_list(const std::string& key,
                                                std::vector<int64_t> fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_array()) fail(key, "expected an array of integers");
  std::vector<int64_t> out;
  for (const auto& item : j) {
    if (!item.is_number_integer()) fail(key, "expected an array of integers");
    out.push_back(item.get<int64_t>());
  }
  return out;
}

std::optional<double> ConfigReader::get_optional_double(const std::string& key) {
  const auto& j = lookup(key);
  if (j.is_null()) return std::nullopt;
  if (!j.is_number()) fail(key, "expected a number");
  return j.get<double>();
}

GridDims ConfigReader::get_dims(const std::string& key, GridDims fallback) {
  const auto& j = lookup(key);
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 3) fail(key, "expected [frames, height, width]");
  for (const auto& item : j)
    if (!item.is_number_integer()) fail(key, "expected [frames, height, width]");
  GridDims dims{j[0].get<int64_t>(), j[1].get<int64_t>(), j[2].get<int64_t>()};
  dims.validate();
  return dims;
}

nlohmann::json ConfigReader::get_object(const std::string& key) {
  const auto& j = lookup(key);
  if (j.is_null()) return nlohmann::json::object();
  if (!j.is_object()) fail(key, "expected an object");
  return j;
}

void ConfigReader::finish() const {
  for (const auto& [key, value] : object_.items())
    if (!consumed_.contains(key))
      throw std::invalid_argument("config " + context_ + ": unknown key '" + key + "'");
}

}  // namespace dfs::cli
