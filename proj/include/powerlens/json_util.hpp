#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "powerlens/error.hpp"

namespace powerlens {

using Json = nlohmann::json;

// Canonical text form: sorted keys (nlohmann objects are ordered maps),
// two-space indent, UTF-8, trailing LF.
inline std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw SchemaError(path, e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

namespace detail {

// Schema helpers. Each throws SchemaError carrying the field path.
inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key, "missing required field");
  return *it;
}

inline std::string require_string(const Json& obj, const std::string& key,
                                  const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "." + key, "expected string");
  return v.get<std::string>();
}

inline long long require_int(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_number_integer()) throw SchemaError(path + "." + key, "expected integer");
  return v.get<long long>();
}

inline double require_number(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_number()) throw SchemaError(path + "." + key, "expected number");
  return v.get<double>();
}

inline bool require_bool(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_boolean()) throw SchemaError(path + "." + key, "expected boolean");
  return v.get<bool>();
}

inline const Json& require_array(const Json& obj, const std::string& key,
                                 const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_array()) throw SchemaError(path + "." + key, "expected array");
  return v;
}

inline std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

}  // namespace detail
}  // namespace powerlens
