#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nl2flow {

/// Edge-count bounds on one side of a stage. An empty `max` means unbounded.
struct CardinalityBound {
  int min = 0;
  std::optional<int> max;

  bool below_min(int n) const { return n < min; }
  bool above_max(int n) const { return max.has_value() && n > *max; }
  bool admits(int n) const { return !below_min(n) && !above_max(n); }

  bool operator==(const CardinalityBound&) const = default;
};

/// "0..1", "2..*"
std::string to_string(const CardinalityBound& bound);

enum class ValueKind { String, Integer, Decimal, Boolean, Enum };

struct ValueType {
  ValueKind kind = ValueKind::String;
  std::vector<std::string> variants;  // only for Enum

  bool operator==(const ValueType&) const = default;
};

std::string to_string(const ValueType& type);

struct PropertyDef {
  std::string name;  // slash-qualified, e.g. "Options/Column Method"
  std::string description;
  ValueType type;
  std::optional<std::string> default_value;
  std::optional<std::string> availability;  // condition source text

  bool operator==(const PropertyDef&) const = default;
};

struct StageDef {
  std::string name;
  std::string description;
  std::vector<std::string> synonyms;
  bool is_connector = false;
  CardinalityBound inputs;
  CardinalityBound outputs;
  std::vector<PropertyDef> properties;

  const PropertyDef* find_property(std::string_view property_name) const;

  bool operator==(const StageDef&) const = default;
};

/// One broken invariant. `subject` is the stage name (or a record id for
/// other documents), `field` the offending field path.
struct Violation {
  std::string subject;
  std::string field;
  std::string message;

  bool operator==(const Violation&) const = default;
};

std::string to_string(const Violation& v);

/// Immutable set of stage definitions, ordered by name, plus the keyword
/// index used by the keyword scanner. Construction never fails; run
/// validate_catalog() to check invariants (load_catalog does).
class Catalog {
public:
  Catalog() = default;
  explicit Catalog(std::vector<StageDef> stages);

  const std::vector<StageDef>& stages() const noexcept { return stages_; }
  std::size_t size() const noexcept { return stages_.size(); }
  bool empty() const noexcept { return stages_.empty(); }

  /// Exact, case-sensitive lookup.
  const StageDef* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  /// keyword (lowercase) -> stage names. Every stage name maps to itself.
  const std::map<std::string, std::set<std::string>, std::less<>>& synonym_index() const noexcept {
    return synonym_index_;
  }

  bool operator==(const Catalog& other) const { return stages_ == other.stages_; }

private:
  std::vector<StageDef> stages_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
  std::map<std::string, std::set<std::string>, std::less<>> synonym_index_;
};

/// Parses and validates a catalog document. Throws ParseError for malformed
/// input and ValidationError listing every violation otherwise.
Catalog load_catalog(const std::filesystem::path& path);
Catalog parse_catalog(std::string_view text, std::string_view source = "<catalog>");

/// Pure; returns an empty list iff every stage and property invariant holds.
std::vector<Violation> validate_catalog(const Catalog& catalog);

const StageDef* lookup_stage(const Catalog& catalog, std::string_view name);

nlohmann::ordered_json catalog_to_json(const Catalog& catalog);
std::string serialize_catalog(const Catalog& catalog);

}  // namespace nl2flow
