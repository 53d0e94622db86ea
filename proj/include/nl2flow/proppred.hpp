#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nl2flow/catalog.hpp"
#include "nl2flow/condexpr.hpp"
#include "nl2flow/edgepred.hpp"
#include "nl2flow/llm.hpp"
#include "nl2flow/trace.hpp"

namespace nl2flow {

enum class PropertyStatus {
  Pending,
  Accepted,
  RejectedUnknownName,
  RejectedType,
  RejectedDependency,
  RejectedExternal,
};

std::string_view to_string(PropertyStatus s);

struct PropertyAssignment {
  std::string name;
  std::string raw_value;
  std::optional<Value> value;  // set once coercion succeeds
  PropertyStatus status = PropertyStatus::Pending;
  std::string reason;  // why it was rejected

  bool operator==(const PropertyAssignment&) const = default;
};

/// Known real-world names (connections, schemas, tables) and which stage
/// properties must name one of them.
class ExternalRegistry {
public:
  ExternalRegistry() = default;
  /// Throws ValidationError when a binding names an undeclared kind.
  ExternalRegistry(std::map<std::string, std::set<std::string>> kinds,
                   std::map<std::string, std::map<std::string, std::string>> bindings);

  static ExternalRegistry load(const std::filesystem::path& path);
  static ExternalRegistry parse(std::string_view text, std::string_view source);

  /// Kind bound to `property` of `stage`, if any.
  const std::string* kind_for(std::string_view stage, std::string_view property) const;
  bool known(std::string_view kind, std::string_view value) const;

  const std::map<std::string, std::set<std::string>, std::less<>>& kinds() const noexcept { return kinds_; }

private:
  std::map<std::string, std::set<std::string>, std::less<>> kinds_;
  std::map<std::string, std::map<std::string, std::string, std::less<>>, std::less<>> bindings_;
};

/// Trims whitespace and one pair of surrounding quotes, then converts to the
/// declared type: integers as optional sign plus digits, decimals without
/// exponents, booleans from true/false/yes/no/on/off, enums by
/// case-insensitive match (returned in declared casing).
std::optional<Value> coerce(std::string_view raw, const ValueType& type);

/// Lines of `name = value`; anything else is ignored.
std::vector<PropertyAssignment> parse_property_answer(std::string_view answer);

/// `- Name (type): description` lines for the property prompt.
std::string render_property_list(const StageDef& stage);

/// One completion for the node. An empty answer is a valid empty result.
std::vector<PropertyAssignment> predict_properties(const NodeInstance& node, const StageDef& stage, LlmProvider& llm,
                                                   const TemplateSet& templates, const CompletionParams& params,
                                                   RunLog& log);

struct ValidationOptions {
  /// Re-run the dependency step until no more assignments drop out.
  bool dependency_fixpoint = false;
};

/// Name, type, dependency and external checks in that order. Every item
/// comes back with a final status, in input order. Dependencies see only
/// assignments that passed the first two steps. Throws ConditionTypeError
/// when an availability condition compares against the wrong type.
std::vector<PropertyAssignment> validate_properties(std::vector<PropertyAssignment> assignments,
                                                    const StageDef& stage, const ExternalRegistry& registry,
                                                    const ValidationOptions& options = {});

std::vector<PropertyAssignment> accepted_only(std::span<const PropertyAssignment> assignments);

/// Value text used for scoring: enums and booleans lowercased, other types
/// in their coerced form. Falls back to the trimmed raw text when the
/// property is unknown or the value does not coerce.
std::string canonical_value(std::string_view raw, const PropertyDef* def);

struct ScoredProperty {
  std::string node;
  std::string name;
  std::string value;  // canonical text

  auto operator<=>(const ScoredProperty&) const = default;
};

struct PropCounts {
  long matched = 0;
  long predicted = 0;
  long gold = 0;

  PropCounts& operator+=(const PropCounts& o) {
    matched += o.matched;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }
};

struct PropMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Multiset matching on (node, name, canonical value).
PropCounts prop_counts(std::span<const ScoredProperty> predicted, std::span<const ScoredProperty> gold);
PropMetrics metrics_from_counts(const PropCounts& c);
PropMetrics prop_metrics(std::span<const ScoredProperty> predicted, std::span<const ScoredProperty> gold);

}  // namespace nl2flow
