#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nl2flow {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. `locus` identifies where, e.g. "catalog.json:12"
/// or "stages[3].inputs.max".
class ParseError : public Error {
public:
  ParseError(std::string locus, std::string message)
      : Error(locus.empty() ? message : locus + ": " + message),
        locus_(std::move(locus)),
        message_(std::move(message)) {}

  const std::string& locus() const noexcept { return locus_; }
  const std::string& message() const noexcept { return message_; }

private:
  std::string locus_;
  std::string message_;
};

/// Well-formed input that breaks one or more invariants. All problems are
/// collected before throwing.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out = "validation failed";
    for (const auto& p : problems) {
      out += "\n  - ";
      out += p;
    }
    return out;
  }

  std::vector<std::string> problems_;
};

class LlmError : public Error {
public:
  enum class Kind { Transport, NoScriptMatch, Provider, Unparseable };

  LlmError(Kind kind, std::string message) : Error(std::move(message)), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

/// The agent never produced a usable FINAL answer.
class ProtocolError : public Error {
public:
  ProtocolError(std::string message, std::string transcript)
      : Error(std::move(message)), transcript_(std::move(transcript)) {}

  const std::string& transcript() const noexcept { return transcript_; }

private:
  std::string transcript_;
};

}  // namespace nl2flow
