#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nl2flow/catalog.hpp"
#include "nl2flow/classify.hpp"
#include "nl2flow/llm.hpp"
#include "nl2flow/trace.hpp"

namespace nl2flow {

struct FewShotExample {
  std::string utterance;
  std::vector<std::string> operators;

  bool operator==(const FewShotExample&) const = default;
};

struct DecompositionExample {
  std::string utterance;
  std::vector<std::string> subs;

  bool operator==(const DecompositionExample&) const = default;
};

/// Array of {utterance, operators: [...]}. With a catalog, every operator
/// must be a stage in it (ValidationError otherwise).
std::vector<FewShotExample> load_fewshot_bank(const std::filesystem::path& path, const Catalog* catalog = nullptr);
std::vector<FewShotExample> parse_fewshot_bank(std::string_view text, std::string_view source,
                                               const Catalog* catalog = nullptr);

/// Array of {utterance, subs: [...]}.
std::vector<DecompositionExample> load_decomposition_examples(const std::filesystem::path& path);

struct SubUtterance {
  std::string text;
  int order = 0;

  bool operator==(const SubUtterance&) const = default;
};

enum class CandidateSource { Classifier, Keyword };
std::string_view to_string(CandidateSource source);

struct CandidateSet {
  std::set<std::string> stages;
  std::map<std::string, std::set<CandidateSource>> provenance;

  bool empty() const noexcept { return stages.empty(); }
  void add(const std::string& stage, CandidateSource source);
};

enum class Strategy { Single, Agentic, Cag };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  int requests = 0;
};

TokenUsage usage_of(const RunLog& log);

struct StagePrediction {
  std::vector<std::string> stages;  // order of appearance in the answer
  Strategy strategy = Strategy::Cag;
  RunLog log;

  TokenUsage usage() const { return usage_of(log); }
};

/// Everything the strategies read. Pointers are non-owning and must
/// outlive the call; `classifier` may be null only for predict_single.
struct StagePredictionContext {
  const Catalog* catalog = nullptr;
  const Classifier* classifier = nullptr;
  std::span<const FewShotExample> bank;
  std::span<const DecompositionExample> decomposition_examples;
  LlmProvider* llm = nullptr;
  const TemplateSet* templates = nullptr;
  CompletionParams params;
  std::size_t example_cap = 40;
  int max_agent_steps = 8;
  bool keep_prompts = false;
};

/// `"name": description` lines, one per stage, each ending in a newline.
std::string render_context(std::span<const StageDef* const> stages);

/// `Utterance: ...` / `Operators: "..."` pairs, each followed by a blank line.
std::string render_examples(std::span<const FewShotExample> examples);

/// The operator-list prompt of the template set's family.
RenderedPrompt render_stage_prompt(const TemplateSet& templates, std::span<const StageDef* const> context,
                                   std::span<const FewShotExample> examples, std::string_view utterance);

/// One prompt listing every catalog stage and the whole bank.
StagePrediction predict_single(std::string_view utterance, const StagePredictionContext& ctx);

/// Splits the utterance with one completion call. The answer holds one
/// sub-utterance per line prefixed "- ". Throws LlmError(Unparseable) when
/// nothing usable comes back.
std::vector<SubUtterance> decompose(std::string_view utterance, const StagePredictionContext& ctx, RunLog& log);
std::vector<SubUtterance> parse_decomposition(std::string_view answer);

/// Top classifier label of each sub-utterance (when matched) plus every
/// keyword hit in the full utterance.
CandidateSet build_candidates(std::span<const SubUtterance> subs, const Classifier& classifier,
                              const Catalog& catalog, std::string_view full_utterance, RunLog* log = nullptr);

/// Examples mentioning a candidate, in bank order. Over `cap`, candidates
/// take turns in name order, each claiming its next unclaimed example.
std::vector<FewShotExample> select_examples(const CandidateSet& candidates, std::span<const FewShotExample> bank,
                                            std::size_t cap = 40);

/// Decompose, gather candidates, then ask with a prompt scoped to them.
StagePrediction predict_cag(std::string_view utterance, const StagePredictionContext& ctx);

/// Text-protocol agent: each turn the model answers `CALL classify: <text>`
/// or `FINAL: "<ops>"`. Throws ProtocolError when no usable answer arrives
/// within max_agent_steps.
StagePrediction predict_agentic(std::string_view utterance, const StagePredictionContext& ctx);

StagePrediction predict_stages(Strategy strategy, std::string_view utterance, const StagePredictionContext& ctx);

}  // namespace nl2flow
