#include "nl2flow/condexpr.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "text_util.hpp"

namespace nl2flow {

namespace {

enum class Tok { Path, String, Integer, Decimal, And, Or, Not, Defined, True, False, Op, LParen, RParen, End };

struct Token {
  Tok kind = Tok::End;
  std::size_t pos = 0;
  std::string text;  // path / string contents, or operator spelling
  std::int64_t integer = 0;
  double decimal = 0.0;
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::Path: return fmt::format("path '{}'", t.text);
    case Tok::String: return fmt::format("string \"{}\"", t.text);
    case Tok::Integer:
    case Tok::Decimal: return "number";
    case Tok::And: return "'and'";
    case Tok::Or: return "'or'";
    case Tok::Not: return "'not'";
    case Tok::Defined: return "'defined'";
    case Tok::True: return "'true'";
    case Tok::False: return "'false'";
    case Tok::Op: return fmt::format("'{}'", t.text);
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::End: return "end of input";
  }
  return "token";
}

[[noreturn]] void fail(std::size_t pos, std::vector<std::string> expected, const std::string& found) {
  std::string msg = fmt::format("at offset {}: expected {}", pos, detail::join(expected, " or "));
  if (!found.empty()) msg += ", found " + found;
  throw ConditionSyntaxError(pos, std::move(expected), std::move(msg));
}

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (i_ < src_.size() && detail::is_space(src_[i_])) ++i_;
    Token t;
    t.pos = i_;
    if (i_ >= src_.size()) return t;
    const char c = src_[i_];
    if (c == '\'') return quoted_path(t);
    if (c == '"') return string_literal(t);
    if (c == '(' || c == ')') {
      t.kind = c == '(' ? Tok::LParen : Tok::RParen;
      ++i_;
      return t;
    }
    if (c == '=' || c == '!' || c == '<' || c == '>') return op(t);
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
      return number(t);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return word(t);
    fail(i_, {"a path, literal, operator or keyword"}, fmt::format("'{}'", c));
  }

private:
  Token quoted_path(Token& t) {
    auto close = src_.find('\'', i_ + 1);
    if (close == std::string_view::npos) fail(src_.size(), {"closing \"'\""}, "end of input");
    t.kind = Tok::Path;
    t.text = std::string(src_.substr(i_ + 1, close - i_ - 1));
    if (!is_valid_property_path(t.text)) {
      throw ConditionSyntaxError(t.pos, {"property path"},
                                 fmt::format("at offset {}: invalid property path '{}'", t.pos, t.text));
    }
    i_ = close + 1;
    return t;
  }

  Token string_literal(Token& t) {
    ++i_;
    t.kind = Tok::String;
    while (i_ < src_.size() && src_[i_] != '"') {
      if (src_[i_] == '\\' && i_ + 1 < src_.size()) ++i_;
      t.text += src_[i_++];
    }
    if (i_ >= src_.size()) fail(src_.size(), {"closing '\"'"}, "end of input");
    ++i_;
    return t;
  }

  Token op(Token& t) {
    t.kind = Tok::Op;
    const char c = src_[i_];
    const bool eq_next = i_ + 1 < src_.size() && src_[i_ + 1] == '=';
    if (c == '!' && !eq_next) fail(i_, {"'!='"}, "'!'");
    t.text = std::string(1, c);
    if (c != '=' && eq_next) t.text += '=';
    i_ += t.text.size();
    return t;
  }

  Token number(Token& t) {
    std::size_t j = i_;
    if (src_[j] == '-') ++j;
    while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
    bool is_decimal = false;
    if (j + 1 < src_.size() && src_[j] == '.' && std::isdigit(static_cast<unsigned char>(src_[j + 1]))) {
      is_decimal = true;
      ++j;
      while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
    }
    const char* first = src_.data() + i_;
    const char* last = src_.data() + j;
    if (is_decimal) {
      t.kind = Tok::Decimal;
      std::from_chars(first, last, t.decimal);
    } else {
      t.kind = Tok::Integer;
      auto [ptr, ec] = std::from_chars(first, last, t.integer);
      if (ec != std::errc()) {
        throw ConditionSyntaxError(t.pos, {"integer literal"},
                                   fmt::format("at offset {}: integer literal out of range", t.pos));
      }
    }
    i_ = j;
    return t;
  }

  Token word(Token& t) {
    std::size_t j = i_;
    while (j < src_.size() && (detail::is_alnum(src_[j]) || src_[j] == '_')) ++j;
    auto w = src_.substr(i_, j - i_);
    if (w == "and") t.kind = Tok::And;
    else if (w == "or") t.kind = Tok::Or;
    else if (w == "not") t.kind = Tok::Not;
    else if (w == "defined") t.kind = Tok::Defined;
    else if (w == "true") t.kind = Tok::True;
    else if (w == "false") t.kind = Tok::False;
    else fail(i_, {"a keyword", "a quoted path"}, fmt::format("'{}'", w));
    i_ = j;
    return t;
  }

  std::string_view src_;
  std::size_t i_ = 0;
};

class Parser {
public:
  explicit Parser(std::string_view src) : lex_(src) { advance(); }

  Condition parse() {
    auto e = parse_or();
    if (cur_.kind != Tok::End) fail(cur_.pos, {"'and'", "'or'", "end of input"}, describe(cur_));
    return e;
  }

private:
  void advance() { cur_ = lex_.next(); }

  Condition parse_or() {
    std::vector<Condition> parts{parse_and()};
    while (cur_.kind == Tok::Or) {
      advance();
      parts.push_back(parse_and());
    }
    return parts.size() == 1 ? std::move(parts.front()) : Condition::any_of(std::move(parts));
  }

  Condition parse_and() {
    std::vector<Condition> parts{parse_comparison()};
    while (cur_.kind == Tok::And) {
      advance();
      parts.push_back(parse_comparison());
    }
    return parts.size() == 1 ? std::move(parts.front()) : Condition::all_of(std::move(parts));
  }

  Condition parse_comparison() {
    if (cur_.kind != Tok::Path) return parse_unary();
    std::string path = cur_.text;
    advance();
    if (cur_.kind != Tok::Op) fail(cur_.pos, {"comparison operator"}, describe(cur_));
    const CompareOp op = to_op(cur_.text);
    advance();
    Value literal;
    switch (cur_.kind) {
      case Tok::String: literal = cur_.text; break;
      case Tok::Integer: literal = cur_.integer; break;
      case Tok::Decimal: literal = cur_.decimal; break;
      case Tok::True: literal = true; break;
      case Tok::False: literal = false; break;
      default: fail(cur_.pos, {"string literal", "number", "'true'", "'false'"}, describe(cur_));
    }
    advance();
    return Condition::compare(std::move(path), op, std::move(literal));
  }

  Condition parse_unary() {
    switch (cur_.kind) {
      case Tok::Not:
        advance();
        // `not` binds tighter than comparisons, so `not 'A' = 1` is malformed.
        if (cur_.kind == Tok::Path) {
          fail(cur_.pos, {"'('", "'not'", "'defined'", "'true'", "'false'"},
               describe(cur_) + " (wrap a comparison in parentheses after 'not')");
        }
        return Condition::negate(parse_unary());
      case Tok::LParen: {
        advance();
        auto inner = parse_or();
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::Defined: {
        advance();
        expect(Tok::LParen, "'('");
        if (cur_.kind != Tok::Path) fail(cur_.pos, {"quoted path"}, describe(cur_));
        std::string path = cur_.text;
        advance();
        expect(Tok::RParen, "')'");
        return Condition::defined(std::move(path));
      }
      case Tok::True:
        advance();
        return Condition::constant(true);
      case Tok::False:
        advance();
        return Condition::constant(false);
      default:
        fail(cur_.pos, {"quoted path", "'('", "'not'", "'defined'", "'true'", "'false'"}, describe(cur_));
    }
  }

  void expect(Tok kind, const char* spelling) {
    if (cur_.kind != kind) fail(cur_.pos, {spelling}, describe(cur_));
    advance();
  }

  static CompareOp to_op(const std::string& s) {
    if (s == "=") return CompareOp::Eq;
    if (s == "!=") return CompareOp::Ne;
    if (s == "<") return CompareOp::Lt;
    if (s == "<=") return CompareOp::Le;
    if (s == ">") return CompareOp::Gt;
    return CompareOp::Ge;
  }

  Lexer lex_;
  Token cur_;
};

std::string_view type_name(const Value& v) {
  switch (v.index()) {
    case 0: return "boolean";
    case 1: return "integer";
    case 2: return "decimal";
    default: return "string";
  }
}

template <typename T>
bool apply(CompareOp op, const T& a, const T& b) {
  switch (op) {
    case CompareOp::Eq: return a == b;
    case CompareOp::Ne: return a != b;
    case CompareOp::Lt: return a < b;
    case CompareOp::Le: return a <= b;
    case CompareOp::Gt: return a > b;
    case CompareOp::Ge: return a >= b;
  }
  return false;
}

bool compare_values(const Condition& c, const Value& actual) {
  const Value& lit = c.literal;
  auto mismatch = [&] {
    return ConditionTypeError(fmt::format("cannot compare {} literal with {} value of '{}'",
                                          type_name(lit), type_name(actual), c.path));
  };
  const bool lit_numeric = lit.index() == 1 || lit.index() == 2;
  const bool act_numeric = actual.index() == 1 || actual.index() == 2;
  if (lit_numeric && act_numeric) {
    if (lit.index() == 1 && actual.index() == 1) {
      return apply(c.op, std::get<std::int64_t>(actual), std::get<std::int64_t>(lit));
    }
    auto as_double = [](const Value& v) {
      return v.index() == 1 ? static_cast<double>(std::get<std::int64_t>(v)) : std::get<double>(v);
    };
    return apply(c.op, as_double(actual), as_double(lit));
  }
  if (lit.index() != actual.index()) throw mismatch();
  if (lit.index() == 0) {
    if (c.op != CompareOp::Eq && c.op != CompareOp::Ne) {
      throw ConditionTypeError(fmt::format("ordering comparison on boolean property '{}'", c.path));
    }
    return apply(c.op, std::get<bool>(actual), std::get<bool>(lit));
  }
  return apply(c.op, std::get<std::string>(actual), std::get<std::string>(lit));
}

std::string literal_source(const Value& v) {
  if (v.index() == 3) {
    std::string out = "\"";
    for (char ch : std::get<std::string>(v)) {
      if (ch == '"' || ch == '\\') out += '\\';
      out += ch;
    }
    return out + "\"";
  }
  auto s = format_value(v);
  if (v.index() == 2 && s.find('.') == std::string::npos) s += ".0";
  return s;
}

bool is_composite(const Condition& c) {
  return c.kind == Condition::Kind::And || c.kind == Condition::Kind::Or;
}

}  // namespace

ConditionSyntaxError::ConditionSyntaxError(std::size_t position, std::vector<std::string> expected,
                                           std::string message)
    : ParseError("condition", std::move(message)), position_(position), expected_(std::move(expected)) {}

std::string format_value(const Value& v) {
  switch (v.index()) {
    case 0: return std::get<bool>(v) ? "true" : "false";
    case 1: return std::to_string(std::get<std::int64_t>(v));
    case 2: {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, std::get<double>(v), std::chars_format::fixed);
      if (ec != std::errc()) return fmt::format("{}", std::get<double>(v));
      return std::string(buf, ptr);
    }
    default: return std::get<std::string>(v);
  }
}

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "!=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
  }
  return "=";
}

Condition Condition::constant(bool value) {
  Condition c;
  c.kind = Kind::Literal;
  c.literal = value;
  return c;
}

Condition Condition::compare(std::string path, CompareOp op, Value literal) {
  Condition c;
  c.kind = Kind::Compare;
  c.path = std::move(path);
  c.op = op;
  c.literal = std::move(literal);
  return c;
}

Condition Condition::defined(std::string path) {
  Condition c;
  c.kind = Kind::Defined;
  c.path = std::move(path);
  return c;
}

Condition Condition::negate(Condition operand) {
  Condition c;
  c.kind = Kind::Not;
  c.operands.push_back(std::move(operand));
  return c;
}

Condition Condition::all_of(std::vector<Condition> operands) {
  Condition c;
  c.kind = Kind::And;
  c.operands = std::move(operands);
  return c;
}

Condition Condition::any_of(std::vector<Condition> operands) {
  Condition c;
  c.kind = Kind::Or;
  c.operands = std::move(operands);
  return c;
}

bool operator==(const Condition& a, const Condition& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Condition::Kind::Literal: return a.literal == b.literal;
    case Condition::Kind::Compare: return a.path == b.path && a.op == b.op && a.literal == b.literal;
    case Condition::Kind::Defined: return a.path == b.path;
    default: return a.operands == b.operands;
  }
}

bool is_valid_property_path(std::string_view path) {
  if (path.empty()) return false;
  std::size_t start = 0;
  while (true) {
    auto slash = path.find('/', start);
    auto seg = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (detail::trim(seg).empty() || detail::trim(seg).size() != seg.size()) return false;
    for (char c : seg) {
      if (c == '\'' || static_cast<unsigned char>(c) < 0x20) return false;
    }
    if (slash == std::string_view::npos) return true;
    start = slash + 1;
  }
}

Condition parse_condition(std::string_view text) { return Parser(text).parse(); }

bool eval_condition(const Condition& expr, const PropertyEnv& env) {
  switch (expr.kind) {
    case Condition::Kind::Literal: return std::get<bool>(expr.literal);
    case Condition::Kind::Defined: return env.find(expr.path) != env.end();
    case Condition::Kind::Compare: {
      auto it = env.find(expr.path);
      return it != env.end() && compare_values(expr, it->second);
    }
    case Condition::Kind::Not: return !eval_condition(expr.operands.front(), env);
    case Condition::Kind::And: {
      // Every operand is evaluated so type errors surface regardless of env.
      bool all = true;
      for (const auto& o : expr.operands) all = eval_condition(o, env) && all;
      return all;
    }
    case Condition::Kind::Or: {
      bool any = false;
      for (const auto& o : expr.operands) any = eval_condition(o, env) || any;
      return any;
    }
  }
  return false;
}

std::string to_string(const Condition& expr) {
  switch (expr.kind) {
    case Condition::Kind::Literal: return std::get<bool>(expr.literal) ? "true" : "false";
    case Condition::Kind::Compare:
      return fmt::format("'{}' {} {}", expr.path, to_string(expr.op), literal_source(expr.literal));
    case Condition::Kind::Defined: return fmt::format("defined('{}')", expr.path);
    case Condition::Kind::Not: {
      const auto& inner = expr.operands.front();
      const bool atomic = inner.kind == Condition::Kind::Literal || inner.kind == Condition::Kind::Defined ||
                          inner.kind == Condition::Kind::Not;
      return atomic ? "not " + to_string(inner) : "not (" + to_string(inner) + ")";
    }
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      const char* sep = expr.kind == Condition::Kind::And ? " and " : " or ";
      std::string out;
      for (std::size_t i = 0; i < expr.operands.size(); ++i) {
        if (i) out += sep;
        const auto& o = expr.operands[i];
        out += is_composite(o) ? "(" + to_string(o) + ")" : to_string(o);
      }
      return out;
    }
  }
  return "false";
}

}  // namespace nl2flow
