#include "nl2flow/stagepred.hpp"

#include <algorithm>
#include <functional>
#include <optional>

#include <fmt/format.h>

#include "json_io.hpp"
#include "nl2flow/error.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

constexpr std::string_view kNoMatch = "no match";

void require_ready(const StagePredictionContext& ctx, bool needs_classifier) {
  if (ctx.catalog == nullptr || ctx.llm == nullptr || ctx.templates == nullptr) {
    throw Error("stage prediction needs a catalog, an LLM provider and templates");
  }
  if (needs_classifier && ctx.classifier == nullptr) throw Error("this strategy needs a classifier");
}

std::string quote_list(const std::vector<std::string>& names) {
  return names.empty() ? "(none)" : detail::join(names, ", ");
}

/// Drops names `reject` gives a reason for, noting each under "verify".
std::vector<std::string> verify(std::vector<std::string> names, RunLog& log,
                                const std::function<std::optional<std::string>(const std::string&)>& reject) {
  std::vector<std::string> kept;
  for (auto& n : names) {
    if (auto why = reject(n)) {
      log.note("verify", fmt::format("dropped '{}': {}", n, *why));
    } else {
      kept.push_back(std::move(n));
    }
  }
  return kept;
}

}  // namespace

std::vector<FewShotExample> parse_fewshot_bank(std::string_view text, std::string_view source,
                                               const Catalog* catalog) {
  const auto doc = detail::parse_json(text, source);
  if (!doc.is_array()) throw ParseError(std::string(source), "expected an array of examples");
  std::vector<FewShotExample> bank;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto locus = fmt::format("{}[{}]", source, i);
    FewShotExample ex{detail::require_string(doc[i], "utterance", locus),
                      detail::string_list(detail::require_array(doc[i], "operators", locus), locus + ".operators")};
    if (catalog) {
      for (const auto& op : ex.operators) {
        if (!catalog->contains(op)) problems.push_back(fmt::format("{}: unknown stage '{}'", locus, op));
      }
    }
    bank.push_back(std::move(ex));
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return bank;
}

std::vector<FewShotExample> load_fewshot_bank(const std::filesystem::path& path, const Catalog* catalog) {
  return parse_fewshot_bank(detail::read_text_file(path), path.string(), catalog);
}

std::vector<DecompositionExample> load_decomposition_examples(const std::filesystem::path& path) {
  const auto doc = detail::load_json_file(path);
  if (!doc.is_array()) throw ParseError(path.string(), "expected an array of examples");
  std::vector<DecompositionExample> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto locus = fmt::format("{}[{}]", path.string(), i);
    DecompositionExample ex{detail::require_string(doc[i], "utterance", locus),
                            detail::string_list(detail::require_array(doc[i], "subs", locus), locus + ".subs")};
    if (ex.subs.empty()) throw ParseError(locus + ".subs", "expected at least one sub-utterance");
    out.push_back(std::move(ex));
  }
  return out;
}

std::string_view to_string(CandidateSource source) {
  return source == CandidateSource::Classifier ? "classifier" : "keyword";
}

void CandidateSet::add(const std::string& stage, CandidateSource source) {
  stages.insert(stage);
  provenance[stage].insert(source);
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Single: return "single";
    case Strategy::Agentic: return "agentic";
    case Strategy::Cag: return "cag";
  }
  return "cag";
}

Strategy parse_strategy(std::string_view name) {
  const auto n = detail::to_lower(detail::trim(name));
  if (n == "single") return Strategy::Single;
  if (n == "agentic") return Strategy::Agentic;
  if (n == "cag") return Strategy::Cag;
  throw Error(fmt::format("unknown strategy '{}' (expected single, agentic or cag)", name));
}

TokenUsage usage_of(const RunLog& log) {
  return {log.total_prompt_tokens(), log.total_completion_tokens(), static_cast<int>(log.requests().size())};
}

std::string render_context(std::span<const StageDef* const> stages) {
  std::string out;
  for (const auto* s : stages) out += fmt::format("\"{}\": {}\n", s->name, s->description);
  return out;
}

std::string render_examples(std::span<const FewShotExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += fmt::format("Utterance: {}\nOperators: \"{}\"\n\n", ex.utterance, format_operator_list(ex.operators));
  }
  return out;
}

RenderedPrompt render_stage_prompt(const TemplateSet& templates, std::span<const StageDef* const> context,
                                   std::span<const FewShotExample> examples, std::string_view utterance) {
  return render_prompt(templates.get("stage"), {{"context", render_context(context)},
                                                {"examples", render_examples(examples)},
                                                {"utterance", std::string(utterance)}});
}

StagePrediction predict_single(std::string_view utterance, const StagePredictionContext& ctx) {
  require_ready(ctx, false);
  StagePrediction out;
  out.strategy = Strategy::Single;
  out.log = RunLog(ctx.keep_prompts);

  std::vector<const StageDef*> context;
  for (const auto& s : ctx.catalog->stages()) context.push_back(&s);
  auto prompt = render_stage_prompt(*ctx.templates, context, ctx.bank, utterance);
  auto answer = call_llm(*ctx.llm, "stage", prompt, ctx.params, out.log);
  auto names = parse_operator_list(answer.text);
  out.log.note("answer", quote_list(names));
  out.stages = verify(std::move(names), out.log, [&](const std::string& n) -> std::optional<std::string> {
    if (!ctx.catalog->contains(n)) return "not in catalog";
    return std::nullopt;
  });
  return out;
}

std::vector<SubUtterance> parse_decomposition(std::string_view answer) {
  std::vector<std::string> dashed, plain;
  for (auto line : detail::split_lines(answer)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    // A model that keeps going past its answer starts a new example.
    if (line.starts_with("Utterance:")) break;
    if (line.front() == '-' || line.front() == '*') {
      auto item = detail::trim(line.substr(1));
      if (!item.empty()) dashed.emplace_back(item);
    } else {
      plain.emplace_back(line);
    }
  }
  const auto& items = dashed.empty() ? plain : dashed;
  if (items.empty()) {
    throw LlmError(LlmError::Kind::Unparseable, "empty decomposition");
  }
  std::vector<SubUtterance> subs;
  for (std::size_t i = 0; i < items.size(); ++i) subs.push_back({items[i], static_cast<int>(i)});
  return subs;
}

std::vector<SubUtterance> decompose(std::string_view utterance, const StagePredictionContext& ctx, RunLog& log) {
  if (ctx.llm == nullptr || ctx.templates == nullptr) throw Error("decomposition needs an LLM provider and templates");
  std::string examples;
  for (const auto& ex : ctx.decomposition_examples) {
    examples += fmt::format("Utterance: {}\nSub-utterances:\n", ex.utterance);
    for (const auto& s : ex.subs) examples += fmt::format("- {}\n", s);
    examples += "\n";
  }
  auto prompt = render_prompt(ctx.templates->get("decompose"),
                              {{"examples", examples}, {"utterance", std::string(utterance)}});
  auto answer = call_llm(*ctx.llm, "decompose", prompt, ctx.params, log);
  auto subs = parse_decomposition(answer.text);
  for (const auto& s : subs) log.note("sub-utterance", fmt::format("{}: {}", s.order, s.text));
  return subs;
}

CandidateSet build_candidates(std::span<const SubUtterance> subs, const Classifier& classifier,
                              const Catalog& catalog, std::string_view full_utterance, RunLog* log) {
  CandidateSet out;
  for (const auto& sub : subs) {
    const auto c = classifier.classify(sub.text);
    const auto top = c.top();
    if (log) {
      const double score = c.ranked.empty() ? 0.0 : c.ranked.front().score;
      log->note("classify", top ? fmt::format("\"{}\" -> {} ({:.3f})", sub.text, *top, score)
                                : fmt::format("\"{}\" -> {} (best {:.3f})", sub.text, kNoMatch, score));
    }
    // A remote classifier could answer with a label this catalog lacks.
    if (top && catalog.contains(*top)) out.add(*top, CandidateSource::Classifier);
  }
  for (const auto& stage : keyword_scan(catalog, full_utterance)) out.add(stage, CandidateSource::Keyword);
  if (log) {
    std::vector<std::string> shown;
    for (const auto& s : out.stages) {
      std::vector<std::string> sources;
      for (auto src : out.provenance.at(s)) sources.emplace_back(to_string(src));
      shown.push_back(fmt::format("{} [{}]", s, detail::join(sources, "+")));
    }
    log->note("candidates", quote_list(shown));
  }
  return out;
}

std::vector<FewShotExample> select_examples(const CandidateSet& candidates, std::span<const FewShotExample> bank,
                                            std::size_t cap) {
  if (cap < 1) throw Error("example cap must be at least 1");
  auto mentions = [](const FewShotExample& ex, const std::string& stage) {
    return std::find(ex.operators.begin(), ex.operators.end(), stage) != ex.operators.end();
  };
  std::vector<std::size_t> matching;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (std::any_of(candidates.stages.begin(), candidates.stages.end(),
                    [&](const std::string& s) { return mentions(bank[i], s); })) {
      matching.push_back(i);
    }
  }
  std::vector<bool> taken(bank.size(), false);
  std::size_t picked = 0;
  if (matching.size() <= cap) {
    for (auto i : matching) taken[i] = true;
    picked = matching.size();
  } else {
    std::map<std::string, std::size_t> cursor;  // next position in `matching` per stage
    bool progress = true;
    while (picked < cap && progress) {
      progress = false;
      for (const auto& stage : candidates.stages) {
        if (picked == cap) break;
        auto& pos = cursor[stage];
        while (pos < matching.size() && (taken[matching[pos]] || !mentions(bank[matching[pos]], stage))) ++pos;
        if (pos == matching.size()) continue;
        taken[matching[pos]] = true;
        ++picked;
        progress = true;
      }
    }
  }
  std::vector<FewShotExample> out;
  out.reserve(picked);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (taken[i]) out.push_back(bank[i]);
  }
  return out;
}

StagePrediction predict_cag(std::string_view utterance, const StagePredictionContext& ctx) {
  require_ready(ctx, true);
  StagePrediction out;
  out.strategy = Strategy::Cag;
  out.log = RunLog(ctx.keep_prompts);

  const auto subs = decompose(utterance, ctx, out.log);
  const auto candidates = build_candidates(subs, *ctx.classifier, *ctx.catalog, utterance, &out.log);
  if (candidates.empty()) {
    out.log.note("candidates", "empty candidate set; no stages predicted");
    return out;
  }
  const auto examples = select_examples(candidates, ctx.bank, ctx.example_cap);
  out.log.note("examples", fmt::format("{} of {} bank examples", examples.size(), ctx.bank.size()));

  std::vector<const StageDef*> context;
  for (const auto& name : candidates.stages) context.push_back(ctx.catalog->find(name));
  auto prompt = render_stage_prompt(*ctx.templates, context, examples, utterance);
  auto answer = call_llm(*ctx.llm, "stage", prompt, ctx.params, out.log);
  auto names = parse_operator_list(answer.text);
  out.log.note("answer", quote_list(names));
  out.stages = verify(std::move(names), out.log, [&](const std::string& n) -> std::optional<std::string> {
    if (!ctx.catalog->contains(n)) return "not in catalog";
    if (!candidates.stages.contains(n)) return "not a candidate";
    return std::nullopt;
  });
  return out;
}

StagePrediction predict_agentic(std::string_view utterance, const StagePredictionContext& ctx) {
  require_ready(ctx, true);
  if (ctx.max_agent_steps < 1) throw Error("max_agent_steps must be at least 1");
  StagePrediction out;
  out.strategy = Strategy::Agentic;
  out.log = RunLog(ctx.keep_prompts);

  const auto& tmpl = ctx.templates->get("agent");
  std::string transcript;
  std::string last_output;
  bool last_was_call = false;
  for (int step = 0; step < ctx.max_agent_steps; ++step) {
    auto prompt = render_prompt(tmpl, {{"utterance", std::string(utterance)}, {"transcript", transcript}});
    last_output = call_llm(*ctx.llm, "agent", prompt, ctx.params, out.log).text;
    last_was_call = false;

    std::optional<std::string_view> call, final_answer;
    for (auto line : detail::split_lines(last_output)) {
      line = detail::trim(line);
      if (line.starts_with("FINAL:")) {
        final_answer = line.substr(6);
        break;
      }
      if (line.starts_with("CALL classify:")) {
        call = detail::trim(line.substr(14));
        break;
      }
    }
    if (final_answer) {
      auto names = parse_operator_list(*final_answer);
      out.log.note("final", quote_list(names));
      out.stages = verify(std::move(names), out.log, [&](const std::string& n) -> std::optional<std::string> {
        if (!ctx.catalog->contains(n)) return "not in catalog";
        return std::nullopt;
      });
      return out;
    }
    if (call) {
      last_was_call = true;
      const auto top = ctx.classifier->classify(*call).top();
      const std::string observation = top ? *top : std::string(kNoMatch);
      out.log.note("tool", fmt::format("classify(\"{}\") -> {}", *call, observation));
      transcript += fmt::format("CALL classify: {}\nObservation: {}\n", *call, observation);
    } else {
      out.log.note("protocol", "answer had neither CALL nor FINAL");
      transcript += fmt::format("{}\nObservation: reply with CALL or FINAL\n", detail::trim(last_output));
    }
  }

  const auto fail = [&](std::string why) -> ProtocolError {
    return ProtocolError(fmt::format("agent gave no FINAL answer within {} steps: {}", ctx.max_agent_steps, why),
                         transcript);
  };
  if (last_was_call) throw fail("last turn was a tool call");
  // Best effort: a bare operator list in the last turn still counts.
  std::vector<std::string> names;
  try {
    names = parse_operator_list(last_output);
  } catch (const LlmError&) {
    throw fail("last turn had no operator names");
  }
  if (std::none_of(names.begin(), names.end(), [&](const std::string& n) { return ctx.catalog->contains(n); })) {
    throw fail("last turn named no catalog stage");
  }
  out.log.note("final", "best-effort parse of last turn: " + quote_list(names));
  out.stages = verify(std::move(names), out.log, [&](const std::string& n) -> std::optional<std::string> {
    if (!ctx.catalog->contains(n)) return "not in catalog";
    return std::nullopt;
  });
  return out;
}

StagePrediction predict_stages(Strategy strategy, std::string_view utterance, const StagePredictionContext& ctx) {
  switch (strategy) {
    case Strategy::Single: return predict_single(utterance, ctx);
    case Strategy::Agentic: return predict_agentic(utterance, ctx);
    case Strategy::Cag: return predict_cag(utterance, ctx);
  }
  throw Error("unknown strategy");
}

}  // namespace nl2flow
