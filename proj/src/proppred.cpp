#include "nl2flow/proppred.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "json_io.hpp"
#include "nl2flow/error.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view unquote(std::string_view s) {
  s = detail::trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = detail::trim(s.substr(1, s.size() - 2));
  }
  return s;
}

}  // namespace

std::string_view to_string(PropertyStatus s) {
  switch (s) {
    case PropertyStatus::Pending: return "pending";
    case PropertyStatus::Accepted: return "accepted";
    case PropertyStatus::RejectedUnknownName: return "rejected_unknown_name";
    case PropertyStatus::RejectedType: return "rejected_type";
    case PropertyStatus::RejectedDependency: return "rejected_dependency";
    case PropertyStatus::RejectedExternal: return "rejected_external";
  }
  return "?";
}

ExternalRegistry::ExternalRegistry(std::map<std::string, std::set<std::string>> kinds,
                                   std::map<std::string, std::map<std::string, std::string>> bindings) {
  std::vector<std::string> problems;
  for (auto& [kind, values] : kinds) kinds_.emplace(kind, std::move(values));
  for (auto& [stage, props] : bindings) {
    auto& slot = bindings_[stage];
    for (auto& [prop, kind] : props) {
      if (!kinds_.contains(kind)) {
        problems.push_back(fmt::format("bindings.{}.{}: unknown kind '{}'", stage, prop, kind));
      }
      slot.emplace(prop, kind);
    }
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

ExternalRegistry ExternalRegistry::parse(std::string_view text, std::string_view source) {
  const auto doc = detail::parse_json(text, source);
  const std::string src(source);
  std::map<std::string, std::set<std::string>> kinds;
  const auto& k = detail::require(doc, "kinds", src);
  if (!k.is_object()) throw ParseError(src + ".kinds", "expected an object");
  for (const auto& [kind, values] : k.items()) {
    auto list = detail::string_list(values, src + ".kinds." + kind);
    kinds[kind] = std::set<std::string>(list.begin(), list.end());
  }
  std::map<std::string, std::map<std::string, std::string>> bindings;
  if (doc.contains("bindings")) {
    const auto& b = doc.at("bindings");
    if (!b.is_object()) throw ParseError(src + ".bindings", "expected an object");
    for (const auto& [stage, props] : b.items()) {
      if (!props.is_object()) throw ParseError(src + ".bindings." + stage, "expected an object");
      for (const auto& [prop, kind] : props.items()) {
        if (!kind.is_string()) throw ParseError(src + ".bindings." + stage + "." + prop, "expected a kind name");
        bindings[stage][prop] = kind.get<std::string>();
      }
    }
  }
  return ExternalRegistry(std::move(kinds), std::move(bindings));
}

ExternalRegistry ExternalRegistry::load(const std::filesystem::path& path) {
  return parse(detail::read_text_file(path), path.string());
}

const std::string* ExternalRegistry::kind_for(std::string_view stage, std::string_view property) const {
  auto s = bindings_.find(stage);
  if (s == bindings_.end()) return nullptr;
  auto p = s->second.find(property);
  return p == s->second.end() ? nullptr : &p->second;
}

bool ExternalRegistry::known(std::string_view kind, std::string_view value) const {
  auto k = kinds_.find(kind);
  return k != kinds_.end() && k->second.contains(std::string(value));
}

std::optional<Value> coerce(std::string_view raw, const ValueType& type) {
  const auto s = unquote(raw);
  switch (type.kind) {
    case ValueKind::String:
      return Value(std::string(s));
    case ValueKind::Integer: {
      auto digits = s;
      if (!digits.empty() && (digits.front() == '+' || digits.front() == '-')) digits.remove_prefix(1);
      if (!all_digits(digits)) return std::nullopt;
      std::int64_t v = 0;
      auto body = s.front() == '+' ? s.substr(1) : s;
      auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
      if (ec != std::errc() || p != body.data() + body.size()) return std::nullopt;
      return Value(v);
    }
    case ValueKind::Decimal: {
      auto body = s;
      if (!body.empty() && (body.front() == '+' || body.front() == '-')) body.remove_prefix(1);
      const auto dot = body.find('.');
      const auto whole = body.substr(0, dot);
      const auto frac = dot == std::string_view::npos ? std::string_view() : body.substr(dot + 1);
      const bool ok = dot == std::string_view::npos ? all_digits(whole)
                                                    : (all_digits(whole) || whole.empty()) &&
                                                          (all_digits(frac) || frac.empty()) &&
                                                          !(whole.empty() && frac.empty());
      if (!ok) return std::nullopt;
      double v = 0;
      const std::string text = (s.front() == '-' ? "-" : "") + std::string(whole.empty() ? "0" : whole) + "." +
                               std::string(frac.empty() ? "0" : frac);
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) return std::nullopt;
      return Value(v);
    }
    case ValueKind::Boolean: {
      const auto lowered = detail::to_lower(s);
      if (lowered == "true" || lowered == "yes" || lowered == "on") return Value(true);
      if (lowered == "false" || lowered == "no" || lowered == "off") return Value(false);
      return std::nullopt;
    }
    case ValueKind::Enum:
      for (const auto& v : type.variants) {
        if (detail::iequals(v, s)) return Value(v);
      }
      return std::nullopt;
  }
  return std::nullopt;
}

std::vector<PropertyAssignment> parse_property_answer(std::string_view answer) {
  std::vector<PropertyAssignment> out;
  for (auto line : detail::split_lines(answer)) {
    line = detail::trim(line);
    if (line.starts_with("- ")) line = detail::trim(line.substr(2));
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    auto name = unquote(line.substr(0, eq));
    if (name.empty()) continue;
    PropertyAssignment a;
    a.name = std::string(name);
    a.raw_value = std::string(detail::trim(line.substr(eq + 1)));
    out.push_back(std::move(a));
  }
  return out;
}

std::string render_property_list(const StageDef& stage) {
  std::string out;
  for (const auto& p : stage.properties) {
    out += fmt::format("- {} ({}): {}\n", p.name, to_string(p.type), p.description);
  }
  return out;
}

std::vector<PropertyAssignment> predict_properties(const NodeInstance& node, const StageDef& stage, LlmProvider& llm,
                                                   const TemplateSet& templates, const CompletionParams& params,
                                                   RunLog& log) {
  if (detail::trim(node.sub_utterance).empty()) {
    throw Error(fmt::format("node '{}' has no sub-utterance", node.unique_name));
  }
  auto prompt = render_prompt(templates.get("properties"), {{"stage", stage.name},
                                                            {"properties", render_property_list(stage)},
                                                            {"sub_utterance", node.sub_utterance}});
  auto answer = call_llm(llm, "properties", prompt, params, log);
  auto assignments = parse_property_answer(answer.text);
  log.note("properties", fmt::format("{}: {} assignment(s) proposed", node.unique_name, assignments.size()));
  return assignments;
}

std::vector<PropertyAssignment> validate_properties(std::vector<PropertyAssignment> assignments,
                                                    const StageDef& stage, const ExternalRegistry& registry,
                                                    const ValidationOptions& options) {
  auto reject = [](PropertyAssignment& a, PropertyStatus s, std::string why) {
    a.status = s;
    a.reason = std::move(why);
  };
  std::vector<const PropertyDef*> defs(assignments.size(), nullptr);

  // 1. The name must belong to the stage; later duplicates are dropped.
  std::set<std::string> seen;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto& a = assignments[i];
    a.status = PropertyStatus::Pending;
    a.reason.clear();
    a.value.reset();
    const auto* def = stage.find_property(a.name);
    if (!def) {
      auto it = std::find_if(stage.properties.begin(), stage.properties.end(),
                             [&](const PropertyDef& p) { return detail::iequals(p.name, a.name); });
      if (it != stage.properties.end()) def = &*it;
    }
    if (!def) {
      reject(a, PropertyStatus::RejectedUnknownName, fmt::format("'{}' has no property '{}'", stage.name, a.name));
      continue;
    }
    a.name = def->name;
    if (!seen.insert(a.name).second) {
      reject(a, PropertyStatus::RejectedUnknownName, "repeats an earlier assignment");
      continue;
    }
    defs[i] = def;
  }

  // 2. The value must coerce to the declared type.
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto& a = assignments[i];
    if (a.status != PropertyStatus::Pending) continue;
    a.value = coerce(a.raw_value, defs[i]->type);
    if (!a.value) reject(a, PropertyStatus::RejectedType, fmt::format("not a valid {}", to_string(defs[i]->type)));
  }

  // 3. Availability conditions, over what survived the first two steps.
  for (bool changed = true; changed;) {
    changed = false;
    PropertyEnv env;
    for (const auto& a : assignments) {
      if (a.status == PropertyStatus::Pending) env.emplace(a.name, *a.value);
    }
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      auto& a = assignments[i];
      if (a.status != PropertyStatus::Pending || !defs[i]->availability) continue;
      if (!eval_condition(parse_condition(*defs[i]->availability), env)) {
        reject(a, PropertyStatus::RejectedDependency, "requires " + *defs[i]->availability);
        changed = true;
      }
    }
    if (!options.dependency_fixpoint) break;
  }

  // 4. Values bound to a registry kind must name a known artifact.
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto& a = assignments[i];
    if (a.status != PropertyStatus::Pending) continue;
    if (const auto* kind = registry.kind_for(stage.name, a.name)) {
      const auto text = format_value(*a.value);
      if (!registry.known(*kind, text)) {
        reject(a, PropertyStatus::RejectedExternal, fmt::format("unknown {} '{}'", *kind, text));
        continue;
      }
    }
    a.status = PropertyStatus::Accepted;
  }
  return assignments;
}

std::vector<PropertyAssignment> accepted_only(std::span<const PropertyAssignment> assignments) {
  std::vector<PropertyAssignment> out;
  for (const auto& a : assignments) {
    if (a.status == PropertyStatus::Accepted) out.push_back(a);
  }
  return out;
}

std::string canonical_value(std::string_view raw, const PropertyDef* def) {
  if (def) {
    if (auto v = coerce(raw, def->type)) {
      const auto text = format_value(*v);
      const bool fold = def->type.kind == ValueKind::Enum || def->type.kind == ValueKind::Boolean;
      return fold ? detail::to_lower(text) : text;
    }
  }
  return std::string(unquote(raw));
}

PropCounts prop_counts(std::span<const ScoredProperty> predicted, std::span<const ScoredProperty> gold) {
  std::map<ScoredProperty, long> remaining;
  for (const auto& g : gold) ++remaining[g];
  PropCounts c;
  c.predicted = static_cast<long>(predicted.size());
  c.gold = static_cast<long>(gold.size());
  for (const auto& p : predicted) {
    auto it = remaining.find(p);
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++c.matched;
    }
  }
  return c;
}

PropMetrics metrics_from_counts(const PropCounts& c) {
  PropMetrics m;
  m.precision = c.predicted == 0 ? (c.gold == 0 ? 1.0 : 0.0) : static_cast<double>(c.matched) / c.predicted;
  m.recall = c.gold == 0 ? (c.predicted == 0 ? 1.0 : 0.0) : static_cast<double>(c.matched) / c.gold;
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

PropMetrics prop_metrics(std::span<const ScoredProperty> predicted, std::span<const ScoredProperty> gold) {
  return metrics_from_counts(prop_counts(predicted, gold));
}

}  // namespace nl2flow
