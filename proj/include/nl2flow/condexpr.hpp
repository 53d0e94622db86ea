#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nl2flow/error.hpp"

namespace nl2flow {

/// A typed property value or expression literal.
using Value = std::variant<bool, std::int64_t, double, std::string>;

/// Canonical text of a value: true/false, decimal integers, shortest
/// round-tripping fixed-point decimals, strings verbatim.
std::string format_value(const Value& v);

/// Property path -> coerced value, for the properties of one stage.
using PropertyEnv = std::map<std::string, Value, std::less<>>;

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CompareOp op);

/// Availability condition syntax tree.
///
/// Grammar (lowest to highest precedence):
///
///     or_expr   := and_expr ("or" and_expr)*
///     and_expr  := cmp_expr ("and" cmp_expr)*
///     cmp_expr  := 'path' op literal | unary
///     unary     := "not" unary | "(" or_expr ")" | "defined" "(" 'path' ")"
///                | "true" | "false"
///     op        := = | != | < | <= | > | >=
///     literal   := "string" | integer | decimal | true | false
///
/// Paths are single-quoted, slash-separated, with non-empty segments.
struct Condition {
  enum class Kind { Literal, Compare, Defined, Not, And, Or };

  Kind kind = Kind::Literal;
  std::string path;                 // Compare, Defined
  CompareOp op = CompareOp::Eq;     // Compare
  Value literal = false;            // Literal, Compare
  std::vector<Condition> operands;  // Not: 1, And/Or: >= 2

  static Condition constant(bool value);
  static Condition compare(std::string path, CompareOp op, Value literal);
  static Condition defined(std::string path);
  static Condition negate(Condition operand);
  static Condition all_of(std::vector<Condition> operands);
  static Condition any_of(std::vector<Condition> operands);

  friend bool operator==(const Condition& a, const Condition& b);
};

class ConditionSyntaxError : public ParseError {
public:
  ConditionSyntaxError(std::size_t position, std::vector<std::string> expected, std::string message);

  /// Byte offset into the source text; equals the text length at end of input.
  std::size_t position() const noexcept { return position_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

/// Comparison between incompatible types, e.g. an integer literal against a
/// string-valued property. Indicates a catalog authoring bug.
class ConditionTypeError : public Error {
public:
  using Error::Error;
};

Condition parse_condition(std::string_view text);

/// A comparison on an absent property is false; defined(p) tests presence.
bool eval_condition(const Condition& expr, const PropertyEnv& env);

/// Reparseable source text.
std::string to_string(const Condition& expr);

bool is_valid_property_path(std::string_view path);

}  // namespace nl2flow
