#include "nl2flow/llm.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "json_io.hpp"
#include "nl2flow/error.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

std::string abbreviate(std::string_view s, std::size_t max = 60) {
  std::string out;
  for (char c : s.substr(0, max)) out += c == '\n' ? ' ' : c;
  if (s.size() > max) out += "...";
  return out;
}

}  // namespace

ModelFamily parse_family(std::string_view name) {
  const auto lowered = detail::to_lower(detail::trim(name));
  if (lowered == "granite") return ModelFamily::Granite;
  if (lowered == "llama") return ModelFamily::Llama;
  throw Error(fmt::format("unknown model family '{}' (expected granite or llama)", name));
}

std::string_view to_string(ModelFamily family) {
  return family == ModelFamily::Granite ? "granite" : "llama";
}

PromptTemplate PromptTemplate::parse(ModelFamily family, std::string_view text,
                                     std::optional<std::string> preseed) {
  PromptTemplate t;
  t.family_ = family;
  t.preseed_ = std::move(preseed);
  std::set<std::string> seen;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      t.segments_.push_back({false, std::string(text.substr(pos))});
      break;
    }
    if (open > pos) t.segments_.push_back({false, std::string(text.substr(pos, open - pos))});
    auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw ParseError(fmt::format("template offset {}", open), "unterminated placeholder");
    }
    std::string name(detail::trim(text.substr(open + 2, close - open - 2)));
    if (name.empty()) throw ParseError(fmt::format("template offset {}", open), "empty placeholder name");
    if (!seen.insert(name).second) {
      throw ParseError(fmt::format("template offset {}", open), fmt::format("placeholder '{}' repeated", name));
    }
    t.segments_.push_back({true, std::move(name)});
    pos = close + 2;
  }
  return t;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  for (const auto& s : segments_) {
    if (s.is_placeholder) out.push_back(s.text);
  }
  return out;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  RenderedPrompt out;
  for (const auto& seg : tmpl.segments()) {
    if (!seg.is_placeholder) {
      out.text += seg.text;
      continue;
    }
    auto it = bindings.find(seg.text);
    if (it == bindings.end()) throw Error(fmt::format("unbound template placeholder '{}'", seg.text));
    out.text += it->second;
  }
  if (tmpl.preseed()) out.text += *tmpl.preseed();
  out.token_estimate = count_tokens(out.text);
  return out;
}

int count_tokens(std::string_view text) {
  int count = 0;
  bool in_word = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = detail::is_alnum(ch) || c >= 0x80;
    if (word) {
      if (!in_word) ++count;
      in_word = true;
    } else {
      in_word = false;
      if (!detail::is_space(ch)) ++count;
    }
  }
  return count;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir, ModelFamily family) {
  const auto manifest_path = dir / "manifest.json";
  const auto manifest = detail::load_json_file(manifest_path);
  const auto family_name = std::string(to_string(family));
  const auto& tasks = detail::require(manifest, family_name.c_str(), manifest_path.string());
  if (!tasks.is_object()) throw ParseError(manifest_path.string() + "." + family_name, "expected an object");

  TemplateSet set;
  set.family_ = family;
  std::vector<std::string> problems;
  for (const auto& [task, entry] : tasks.items()) {
    const auto locus = fmt::format("{}.{}.{}", manifest_path.string(), family_name, task);
    auto text = detail::read_text_file(dir / detail::require_string(entry, "file", locus));
    if (!text.empty() && text.back() == '\n') text.pop_back();
    std::optional<std::string> preseed;
    if (entry.contains("preseed")) preseed = detail::require_string(entry, "preseed", locus);
    auto tmpl = PromptTemplate::parse(family, text, preseed);
    if (family == ModelFamily::Granite && text.find("<|start_of_role|>") == std::string::npos) {
      problems.push_back(fmt::format("{}: granite template lacks role delimiters", locus));
    }
    if (family == ModelFamily::Llama && task == "stage" && preseed != "\"") {
      problems.push_back(fmt::format("{}: llama operator-list template must preseed a double quote", locus));
    }
    set.templates_.emplace(task, std::move(tmpl));
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return set;
}

const PromptTemplate& TemplateSet::get(std::string_view task) const {
  auto it = templates_.find(task);
  if (it == templates_.end()) {
    throw Error(fmt::format("no {} template for task '{}'", to_string(family_), task));
  }
  return it->second;
}

bool ScriptMatcher::matches(std::string_view prompt) const {
  switch (kind) {
    case Kind::Exact: return !patterns.empty() && prompt == patterns.front();
    case Kind::Suffix:
      return !patterns.empty() && prompt.size() >= patterns.front().size() &&
             prompt.substr(prompt.size() - patterns.front().size()) == patterns.front();
    case Kind::Contains:
      return !patterns.empty() && std::all_of(patterns.begin(), patterns.end(), [&](const std::string& p) {
               return prompt.find(p) != std::string_view::npos;
             });
  }
  return false;
}

std::string ScriptMatcher::describe() const {
  const char* name = kind == Kind::Exact ? "exact" : kind == Kind::Suffix ? "suffix" : "contains";
  std::vector<std::string> shown;
  for (const auto& p : patterns) shown.push_back("\"" + abbreviate(p) + "\"");
  return fmt::format("{} {}", name, detail::join(shown, " & "));
}

MockProvider::MockProvider(std::vector<ScriptEntry> scripts) : scripts_(std::move(scripts)) {}

std::vector<ScriptEntry> MockProvider::parse_scripts(std::string_view text, std::string_view source) {
  const auto doc = detail::parse_json(text, source);
  if (!doc.is_array()) throw ParseError(std::string(source), "expected an array of scripts");
  std::vector<ScriptEntry> scripts;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto locus = fmt::format("{}[{}]", source, i);
    const auto& entry = doc[i];
    const auto& match = detail::require(entry, "match", locus);
    ScriptEntry s;
    if (match.contains("exact")) {
      s.match.kind = ScriptMatcher::Kind::Exact;
      s.match.patterns = {detail::require_string(match, "exact", locus + ".match")};
    } else if (match.contains("suffix")) {
      s.match.kind = ScriptMatcher::Kind::Suffix;
      s.match.patterns = {detail::require_string(match, "suffix", locus + ".match")};
    } else if (match.contains("contains")) {
      s.match.kind = ScriptMatcher::Kind::Contains;
      const auto& c = match.at("contains");
      s.match.patterns = c.is_array() ? detail::string_list(c, locus + ".match.contains")
                                      : std::vector<std::string>{detail::require_string(match, "contains", locus + ".match")};
    } else {
      throw ParseError(locus + ".match", "expected one of exact, contains, suffix");
    }
    s.response = detail::require_string(entry, "response", locus);
    auto read_count = [&](const char* key) -> std::optional<int> {
      if (!entry.contains(key)) return std::nullopt;
      if (!entry.at(key).is_number_integer() || entry.at(key).get<int>() < 0) {
        throw ParseError(locus + "." + key, "expected a non-negative integer");
      }
      return entry.at(key).get<int>();
    };
    s.prompt_tokens = read_count("prompt_tokens");
    s.completion_tokens = read_count("completion_tokens");
    scripts.push_back(std::move(s));
  }
  return scripts;
}

MockProvider MockProvider::from_file(const std::filesystem::path& path) {
  return MockProvider(parse_scripts(detail::read_text_file(path), path.string()));
}

CompletionResult MockProvider::complete(const RenderedPrompt& prompt, const CompletionParams&) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  for (const auto& s : scripts_) {
    if (!s.match.matches(prompt.text)) continue;
    CompletionResult r;
    r.text = s.response;
    r.prompt_tokens = s.prompt_tokens.value_or(prompt.token_estimate);
    r.completion_tokens = s.completion_tokens.value_or(count_tokens(s.response));
    return r;
  }
  std::string msg = fmt::format("no mock script matches prompt \"{}\"; tried:",
                                abbreviate(prompt.text.substr(prompt.text.size() > 120 ? prompt.text.size() - 120 : 0), 120));
  for (const auto& s : scripts_) msg += "\n  " + s.match.describe();
  if (scripts_.empty()) msg += " (no scripts)";
  throw LlmError(LlmError::Kind::NoScriptMatch, msg);
}

std::size_t MockProvider::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::vector<std::string> parse_operator_list(std::string_view text) {
  auto body = detail::trim(text);
  if (!body.empty() && body.front() == '"') body.remove_prefix(1);
  if (auto quote = body.find('"'); quote != std::string_view::npos) body = body.substr(0, quote);
  if (auto nl = body.find('\n'); nl != std::string_view::npos) body = body.substr(0, nl);
  if (std::none_of(body.begin(), body.end(), [](char c) { return detail::is_alnum(c); })) {
    throw LlmError(LlmError::Kind::Unparseable,
                   fmt::format("no operator names in answer \"{}\"", abbreviate(text)));
  }
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto comma = body.find(',', start);
    if (comma == std::string_view::npos) comma = body.size();
    auto item = detail::trim(body.substr(start, comma - start));
    while (!item.empty() && (item.front() == '\'' || item.front() == '"')) item.remove_prefix(1);
    while (!item.empty() && (item.back() == '\'' || item.back() == '"')) item.remove_suffix(1);
    item = detail::trim(item);
    if (!item.empty()) names.push_back(detail::to_lower(item));
    start = comma + 1;
  }
  return names;
}

std::string format_operator_list(std::span<const std::string> names) {
  return detail::join(std::vector<std::string>(names.begin(), names.end()), ", ");
}

Multiset to_multiset(std::span<const std::string> names) {
  Multiset m;
  for (const auto& n : names) ++m[n];
  return m;
}

}  // namespace nl2flow
