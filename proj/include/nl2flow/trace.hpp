#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2flow/llm.hpp"

namespace nl2flow {

struct TraceEntry {
  std::string step;
  std::string detail;

  bool operator==(const TraceEntry&) const = default;
};

/// One completion request as seen by the pipeline.
struct RequestRecord {
  std::string task;
  std::string prompt_hash;
  int prompt_tokens = 0;    // estimate from the rendered prompt
  int reported_prompt_tokens = 0;
  int completion_tokens = 0;
  std::optional<std::string> prompt_text;

  bool operator==(const RequestRecord&) const = default;
};

/// Append-only record of intermediate steps and LLM usage.
class RunLog {
public:
  explicit RunLog(bool keep_prompts = false) : keep_prompts_(keep_prompts) {}

  void note(std::string step, std::string detail);
  void record(std::string task, const RenderedPrompt& prompt, const CompletionResult& result);
  void append(const RunLog& other);

  const std::vector<TraceEntry>& trace() const noexcept { return trace_; }
  const std::vector<RequestRecord>& requests() const noexcept { return requests_; }
  bool keeps_prompts() const noexcept { return keep_prompts_; }

  long total_prompt_tokens() const;
  long total_completion_tokens() const;

private:
  bool keep_prompts_;
  std::vector<TraceEntry> trace_;
  std::vector<RequestRecord> requests_;
};

/// Sends the prompt and records the request in `log`.
CompletionResult call_llm(LlmProvider& llm, const std::string& task, const RenderedPrompt& prompt,
                          const CompletionParams& params, RunLog& log);

nlohmann::ordered_json to_json(const RunLog& log);

}  // namespace nl2flow
