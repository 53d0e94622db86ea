#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nl2flow {

enum class ModelFamily { Granite, Llama };

ModelFamily parse_family(std::string_view name);
std::string_view to_string(ModelFamily family);

/// Prompt text with `{{name}}` placeholders. Granite templates carry their
/// role-delimiter tokens inline; a preseed is appended after the last
/// segment (the LLaMA stage prompt ends with an opening quote).
class PromptTemplate {
public:
  struct Segment {
    bool is_placeholder = false;
    std::string text;  // literal text, or the placeholder name
  };

  /// Throws ParseError on an unterminated or repeated placeholder.
  static PromptTemplate parse(ModelFamily family, std::string_view text,
                              std::optional<std::string> preseed = std::nullopt);

  ModelFamily family() const noexcept { return family_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const std::optional<std::string>& preseed() const noexcept { return preseed_; }
  std::vector<std::string> placeholders() const;

private:
  ModelFamily family_ = ModelFamily::Granite;
  std::vector<Segment> segments_;
  std::optional<std::string> preseed_;
};

struct RenderedPrompt {
  std::string text;
  int token_estimate = 0;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Byte-exact substitution. Throws Error naming the first unbound placeholder.
RenderedPrompt render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

/// Approximate token count: maximal alphanumeric runs plus non-space
/// punctuation characters. Bytes >= 0x80 count as alphanumeric.
int count_tokens(std::string_view text);

/// Per-task prompt templates of one model family, loaded from a directory
/// holding `manifest.json` and the template text files it names.
class TemplateSet {
public:
  static TemplateSet load(const std::filesystem::path& dir, ModelFamily family);

  const PromptTemplate& get(std::string_view task) const;
  ModelFamily family() const noexcept { return family_; }

private:
  ModelFamily family_ = ModelFamily::Granite;
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 512;
  std::vector<std::string> stop;
};

struct CompletionResult {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

class LlmProvider {
public:
  virtual ~LlmProvider() = default;

  /// Must be safe to call from several threads at once.
  virtual CompletionResult complete(const RenderedPrompt& prompt, const CompletionParams& params) = 0;
};

/// A mock script matcher: the whole prompt equals a pattern, the prompt
/// contains every pattern, or the prompt ends with the pattern.
struct ScriptMatcher {
  enum class Kind { Exact, Contains, Suffix };

  Kind kind = Kind::Contains;
  std::vector<std::string> patterns;

  bool matches(std::string_view prompt) const;
  std::string describe() const;
};

struct ScriptEntry {
  ScriptMatcher match;
  std::string response;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

/// Deterministic scripted provider. Scripts are tried in order and the first
/// matching one answers; scripts are never consumed, so results do not
/// depend on call order.
class MockProvider final : public LlmProvider {
public:
  explicit MockProvider(std::vector<ScriptEntry> scripts);

  /// Array of {match: {exact|contains|suffix}, response, prompt_tokens?,
  /// completion_tokens?}. `contains` may be a string or an array of strings.
  static MockProvider from_file(const std::filesystem::path& path);
  static std::vector<ScriptEntry> parse_scripts(std::string_view text, std::string_view source);

  CompletionResult complete(const RenderedPrompt& prompt, const CompletionParams& params) override;

  std::size_t call_count() const;

private:
  std::vector<ScriptEntry> scripts_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

struct HttpProviderConfig {
  std::string endpoint;  // full URL of the completion route
  std::string api_key;
  std::string model;
  bool raw_prompt = true;  // send {prompt} rather than {messages}
  int max_in_flight = 4;
  int max_retries = 2;
  std::chrono::seconds timeout{120};

  /// From LLM_ENDPOINT, LLM_API_KEY, LLM_MODEL. Empty when LLM_ENDPOINT is unset.
  static std::optional<HttpProviderConfig> from_env();
};

/// Chat/completions-style HTTP client. Request body:
/// {model, prompt | messages, temperature, max_tokens, stop}. Response body:
/// {text} or {choices: [{text} | {message: {content}}]}, plus optional
/// {usage: {prompt_tokens, completion_tokens}}; {error: {message}} is a
/// provider error.
class HttpProvider final : public LlmProvider {
public:
  explicit HttpProvider(HttpProviderConfig config);
  ~HttpProvider() override;

  CompletionResult complete(const RenderedPrompt& prompt, const CompletionParams& params) override;

private:
  struct Gate;
  HttpProviderConfig config_;
  std::unique_ptr<Gate> gate_;
};

/// Parses a comma-separated operator answer such as `"head, tail, head"`.
/// Surrounding quotes are stripped, items trimmed and lowercased, order and
/// duplicates kept. Throws LlmError(Unparseable) when there is no
/// alphanumeric content.
std::vector<std::string> parse_operator_list(std::string_view text);

/// Joins names as `a, b, c`.
std::string format_operator_list(std::span<const std::string> names);

using Multiset = std::map<std::string, int>;
Multiset to_multiset(std::span<const std::string> names);

}  // namespace nl2flow
