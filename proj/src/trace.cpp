#include "nl2flow/trace.hpp"

#include "text_util.hpp"

namespace nl2flow {

void RunLog::note(std::string step, std::string detail) {
  trace_.push_back({std::move(step), std::move(detail)});
}

void RunLog::record(std::string task, const RenderedPrompt& prompt, const CompletionResult& result) {
  RequestRecord r;
  r.task = std::move(task);
  r.prompt_hash = detail::fnv1a_hex(prompt.text);
  r.prompt_tokens = prompt.token_estimate;
  r.reported_prompt_tokens = result.prompt_tokens;
  r.completion_tokens = result.completion_tokens;
  if (keep_prompts_) r.prompt_text = prompt.text;
  requests_.push_back(std::move(r));
}

void RunLog::append(const RunLog& other) {
  trace_.insert(trace_.end(), other.trace_.begin(), other.trace_.end());
  requests_.insert(requests_.end(), other.requests_.begin(), other.requests_.end());
}

long RunLog::total_prompt_tokens() const {
  long total = 0;
  for (const auto& r : requests_) total += r.prompt_tokens;
  return total;
}

long RunLog::total_completion_tokens() const {
  long total = 0;
  for (const auto& r : requests_) total += r.completion_tokens;
  return total;
}

CompletionResult call_llm(LlmProvider& llm, const std::string& task, const RenderedPrompt& prompt,
                          const CompletionParams& params, RunLog& log) {
  auto result = llm.complete(prompt, params);
  log.record(task, prompt, result);
  return result;
}

nlohmann::ordered_json to_json(const RunLog& log) {
  nlohmann::ordered_json out;
  out["steps"] = nlohmann::ordered_json::array();
  for (const auto& t : log.trace()) out["steps"].push_back({{"step", t.step}, {"detail", t.detail}});
  out["requests"] = nlohmann::ordered_json::array();
  for (const auto& r : log.requests()) {
    nlohmann::ordered_json j = {{"task", r.task},
                                {"prompt_hash", r.prompt_hash},
                                {"prompt_tokens", r.prompt_tokens},
                                {"reported_prompt_tokens", r.reported_prompt_tokens},
                                {"completion_tokens", r.completion_tokens}};
    if (r.prompt_text) j["prompt"] = *r.prompt_text;
    out["requests"].push_back(std::move(j));
  }
  out["total_prompt_tokens"] = log.total_prompt_tokens();
  out["total_completion_tokens"] = log.total_completion_tokens();
  return out;
}

}  // namespace nl2flow
