#include "nl2flow/catalog.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "json_io.hpp"
#include "nl2flow/condexpr.hpp"
#include "nl2flow/error.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

using detail::require;
using detail::require_array;
using detail::require_string;

constexpr std::string_view kUnbounded = "unbounded";

bool is_stage_identifier(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

int parse_count(const nlohmann::json& v, const std::string& locus) {
  if (!v.is_number_integer()) throw ParseError(locus, "expected an integer");
  return v.get<int>();
}

CardinalityBound parse_bound(const nlohmann::json& j, const std::string& locus) {
  CardinalityBound b;
  b.min = parse_count(require(j, "min", locus), locus + ".min");
  const auto& max = require(j, "max", locus);
  if (max.is_string() && max.get<std::string>() == kUnbounded) {
    b.max.reset();
  } else if (max.is_number_integer()) {
    b.max = max.get<int>();
  } else {
    throw ParseError(locus + ".max", "expected an integer or \"unbounded\"");
  }
  return b;
}

ValueType parse_value_type(const nlohmann::json& j, const std::string& locus) {
  ValueType t;
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "string") t.kind = ValueKind::String;
    else if (s == "integer") t.kind = ValueKind::Integer;
    else if (s == "decimal") t.kind = ValueKind::Decimal;
    else if (s == "boolean") t.kind = ValueKind::Boolean;
    else throw ParseError(locus, fmt::format("unknown value type '{}'", s));
    return t;
  }
  if (j.is_object() && j.contains("enum")) {
    t.kind = ValueKind::Enum;
    t.variants = detail::string_list(j.at("enum"), locus + ".enum");
    return t;
  }
  throw ParseError(locus, "expected a type name or {\"enum\": [...]}");
}

std::optional<std::string> optional_scalar(const nlohmann::json& obj, const char* key,
                                           const std::string& locus) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_primitive()) return it->dump();
  throw ParseError(locus + "." + key, "expected a scalar");
}

PropertyDef parse_property(const nlohmann::json& j, const std::string& locus) {
  PropertyDef p;
  p.name = require_string(j, "name", locus);
  p.description = j.contains("description") ? require_string(j, "description", locus) : "";
  p.type = parse_value_type(require(j, "type", locus), locus + ".type");
  p.default_value = optional_scalar(j, "default", locus);
  p.availability = optional_scalar(j, "availability", locus);
  return p;
}

StageDef parse_stage(const nlohmann::json& j, const std::string& locus) {
  StageDef s;
  s.name = require_string(j, "name", locus);
  s.description = j.contains("description") ? require_string(j, "description", locus) : "";
  if (j.contains("synonyms")) s.synonyms = detail::string_list(j.at("synonyms"), locus + ".synonyms");
  if (j.contains("is_connector")) {
    if (!j.at("is_connector").is_boolean()) throw ParseError(locus + ".is_connector", "expected a boolean");
    s.is_connector = j.at("is_connector").get<bool>();
  }
  s.inputs = parse_bound(require(j, "inputs", locus), locus + ".inputs");
  s.outputs = parse_bound(require(j, "outputs", locus), locus + ".outputs");
  if (j.contains("properties")) {
    const auto& props = require_array(j, "properties", locus);
    for (std::size_t i = 0; i < props.size(); ++i) {
      s.properties.push_back(parse_property(props[i], fmt::format("{}.properties[{}]", locus, i)));
    }
  }
  return s;
}

void check_bound(const StageDef& s, const char* field, const CardinalityBound& b,
                 std::vector<Violation>& out) {
  if (b.min < 0 || (b.max && *b.max < 0)) {
    out.push_back({s.name, field, "bounds must be non-negative"});
  }
  if (b.max && b.min > *b.max) {
    out.push_back({s.name, field, fmt::format("min {} exceeds max {}", b.min, *b.max)});
  }
}

void collect_paths(const Condition& c, std::vector<std::string>& out) {
  if (c.kind == Condition::Kind::Compare || c.kind == Condition::Kind::Defined) out.push_back(c.path);
  for (const auto& o : c.operands) collect_paths(o, out);
}

void check_property(const StageDef& s, const PropertyDef& p, std::vector<Violation>& out) {
  const auto field = fmt::format("properties[{}]", p.name);
  if (!is_valid_property_path(p.name)) {
    out.push_back({s.name, field + ".name", fmt::format("invalid property path '{}'", p.name)});
  }
  if (p.type.kind == ValueKind::Enum) {
    if (p.type.variants.empty()) out.push_back({s.name, field + ".type", "enum has no variants"});
    std::set<std::string> seen;
    for (const auto& v : p.type.variants) {
      if (!seen.insert(v).second) {
        out.push_back({s.name, field + ".type", fmt::format("duplicate enum variant '{}'", v)});
      }
    }
  }
  if (p.availability) {
    try {
      auto cond = parse_condition(*p.availability);
      std::vector<std::string> paths;
      collect_paths(cond, paths);
      for (const auto& path : paths) {
        if (!s.find_property(path)) {
          out.push_back({s.name, field + ".availability",
                         fmt::format("references unknown property '{}'", path)});
        }
      }
    } catch (const ConditionSyntaxError& e) {
      out.push_back({s.name, field + ".availability", e.what()});
    }
  }
}

}  // namespace

std::string to_string(const CardinalityBound& bound) {
  return bound.max ? fmt::format("{}..{}", bound.min, *bound.max) : fmt::format("{}..*", bound.min);
}

std::string to_string(const ValueType& type) {
  switch (type.kind) {
    case ValueKind::String: return "string";
    case ValueKind::Integer: return "integer";
    case ValueKind::Decimal: return "decimal";
    case ValueKind::Boolean: return "boolean";
    case ValueKind::Enum: return "one of " + detail::join(type.variants, ", ");
  }
  return "string";
}

std::string to_string(const Violation& v) {
  return fmt::format("{}: {}: {}", v.subject, v.field, v.message);
}

const PropertyDef* StageDef::find_property(std::string_view property_name) const {
  auto it = std::find_if(properties.begin(), properties.end(),
                         [&](const PropertyDef& p) { return p.name == property_name; });
  return it == properties.end() ? nullptr : &*it;
}

Catalog::Catalog(std::vector<StageDef> stages) : stages_(std::move(stages)) {
  std::stable_sort(stages_.begin(), stages_.end(),
                   [](const StageDef& a, const StageDef& b) { return a.name < b.name; });
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const auto& s = stages_[i];
    by_name_.emplace(s.name, i);
    synonym_index_[detail::to_lower(s.name)].insert(s.name);
    for (const auto& syn : s.synonyms) synonym_index_[detail::to_lower(syn)].insert(s.name);
  }
}

const StageDef* Catalog::find(std::string_view name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &stages_[it->second];
}

std::vector<Violation> validate_catalog(const Catalog& catalog) {
  std::vector<Violation> out;
  const auto& stages = catalog.stages();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.name.empty()) {
      out.push_back({"<unnamed>", "name", "stage name is empty"});
    } else if (!is_stage_identifier(s.name)) {
      out.push_back({s.name, "name", "stage names must be lowercase identifiers [a-z0-9_]"});
    }
    if (i > 0 && stages[i - 1].name == s.name && !s.name.empty()) {
      out.push_back({s.name, "name", fmt::format("duplicate stage name '{}'", s.name)});
    }
    check_bound(s, "inputs", s.inputs, out);
    check_bound(s, "outputs", s.outputs, out);
    for (const auto& syn : s.synonyms) {
      if (detail::trim(syn).empty()) out.push_back({s.name, "synonyms", "empty synonym"});
    }
    std::set<std::string> names;
    for (const auto& p : s.properties) {
      if (!names.insert(p.name).second) {
        out.push_back({s.name, fmt::format("properties[{}]", p.name),
                       fmt::format("duplicate property '{}'", p.name)});
      }
      check_property(s, p, out);
    }
  }
  return out;
}

const StageDef* lookup_stage(const Catalog& catalog, std::string_view name) {
  return catalog.find(name);
}

Catalog parse_catalog(std::string_view text, std::string_view source) {
  auto doc = detail::parse_json(text, source);
  const std::string root(source);
  const auto& stages_json = require_array(doc, "stages", root);
  std::vector<StageDef> stages;
  stages.reserve(stages_json.size());
  for (std::size_t i = 0; i < stages_json.size(); ++i) {
    stages.push_back(parse_stage(stages_json[i], fmt::format("{}: stages[{}]", root, i)));
  }
  Catalog catalog(std::move(stages));
  auto violations = validate_catalog(catalog);
  if (!violations.empty()) {
    std::vector<std::string> problems;
    for (const auto& v : violations) problems.push_back(to_string(v));
    throw ValidationError(std::move(problems));
  }
  return catalog;
}

Catalog load_catalog(const std::filesystem::path& path) {
  return parse_catalog(detail::read_text_file(path), path.string());
}

nlohmann::ordered_json catalog_to_json(const Catalog& catalog) {
  auto bound = [](const CardinalityBound& b) {
    nlohmann::ordered_json j;
    j["min"] = b.min;
    if (b.max) j["max"] = *b.max;
    else j["max"] = kUnbounded;
    return j;
  };
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& s : catalog.stages()) {
    nlohmann::ordered_json js;
    js["name"] = s.name;
    js["description"] = s.description;
    js["synonyms"] = s.synonyms;
    js["is_connector"] = s.is_connector;
    js["inputs"] = bound(s.inputs);
    js["outputs"] = bound(s.outputs);
    auto props = nlohmann::ordered_json::array();
    for (const auto& p : s.properties) {
      nlohmann::ordered_json jp;
      jp["name"] = p.name;
      jp["description"] = p.description;
      if (p.type.kind == ValueKind::Enum) {
        jp["type"] = nlohmann::ordered_json{{"enum", p.type.variants}};
      } else {
        jp["type"] = to_string(p.type);
      }
      if (p.default_value) jp["default"] = *p.default_value;
      if (p.availability) jp["availability"] = *p.availability;
      props.push_back(std::move(jp));
    }
    js["properties"] = std::move(props);
    stages.push_back(std::move(js));
  }
  nlohmann::ordered_json doc;
  doc["stages"] = std::move(stages);
  return doc;
}

std::string serialize_catalog(const Catalog& catalog) {
  return catalog_to_json(catalog).dump(2) + "\n";
}

}  // namespace nl2flow
