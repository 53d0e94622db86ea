#pragma once

// Helpers shared by the document loaders. Not part of the public API.

#include <filesystem>
#include <string>
#include <string_view>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nl2flow/error.hpp"

namespace nl2flow::detail {

std::string read_text_file(const std::filesystem::path& path);

/// Parses JSON, reporting syntax errors as "<source>:<line>:<column>".
nlohmann::json parse_json(std::string_view text, std::string_view source);

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  return parse_json(read_text_file(path), path.string());
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& locus) {
  if (!obj.is_object()) throw ParseError(locus, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(locus, fmt::format("missing field '{}'", key));
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& locus) {
  const auto& v = require(obj, key, locus);
  if (!v.is_string()) throw ParseError(locus + "." + key, "expected a string");
  return v.get<std::string>();
}

inline const nlohmann::json& require_array(const nlohmann::json& obj, const char* key,
                                           const std::string& locus) {
  const auto& v = require(obj, key, locus);
  if (!v.is_array()) throw ParseError(locus + "." + key, "expected an array");
  return v;
}

inline std::vector<std::string> string_list(const nlohmann::json& arr, const std::string& locus) {
  if (!arr.is_array()) throw ParseError(locus, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string()) throw ParseError(fmt::format("{}[{}]", locus, i), "expected a string");
    out.push_back(arr[i].get<std::string>());
  }
  return out;
}

}  // namespace nl2flow::detail
