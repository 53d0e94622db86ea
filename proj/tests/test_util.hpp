#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "nl2flow/catalog.hpp"
#include "nl2flow/eval.hpp"
#include "nl2flow/llm.hpp"
#include "nl2flow/pipeline.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return NL2FLOW_DATA_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(NL2FLOW_TEST_FIXTURES) / name; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline const nl2flow::Catalog& catalog142() {
  static const auto c = nl2flow::load_catalog(data_dir() / "catalog" / "stages142.json");
  return c;
}

inline const nl2flow::Catalog& catalog8() {
  static const auto c = nl2flow::load_catalog(data_dir() / "catalog" / "granite8.json");
  return c;
}

inline const nl2flow::TemplateSet& templates(nl2flow::ModelFamily f = nl2flow::ModelFamily::Granite) {
  static const auto g = nl2flow::TemplateSet::load(data_dir() / "templates", nl2flow::ModelFamily::Granite);
  static const auto l = nl2flow::TemplateSet::load(data_dir() / "templates", nl2flow::ModelFamily::Llama);
  return f == nl2flow::ModelFamily::Granite ? g : l;
}

/// Shipped resources answering through the eval20 mock scripts.
inline const nl2flow::Resources& eval20_resources(const std::string& mocks = "eval20.json") {
  static std::map<std::string, std::unique_ptr<nl2flow::Resources>> cache;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  auto& slot = cache[mocks];
  if (!slot) {
    auto config = nl2flow::PipelineConfig::defaults();
    config.mock_scripts = data_dir() / "mocks" / mocks;
    slot = nl2flow::Resources::load(config);
  }
  return *slot;
}

inline const std::vector<nl2flow::EvalRecord>& eval20() {
  static const auto records = nl2flow::load_dataset(data_dir() / "datasets" / "eval20.json", &catalog142());
  return records;
}

inline const nl2flow::EvalRecord& record(const std::string& id) {
  for (const auto& r : eval20())
    if (r.id == id) return r;
  throw std::runtime_error("no record " + id);
}

inline nl2flow::ScriptEntry contains(std::vector<std::string> patterns, std::string response) {
  nl2flow::ScriptEntry e;
  e.match.kind = nl2flow::ScriptMatcher::Kind::Contains;
  e.match.patterns = std::move(patterns);
  e.response = std::move(response);
  return e;
}

inline nl2flow::ScriptEntry suffix(std::string pattern, std::string response) {
  nl2flow::ScriptEntry e;
  e.match.kind = nl2flow::ScriptMatcher::Kind::Suffix;
  e.match.patterns = {std::move(pattern)};
  e.response = std::move(response);
  return e;
}

inline constexpr const char* kGraniteTail = "<|end_of_text|><|start_of_role|>assistant<|end_of_role|>";

/// Final lines of the shipped granite prompts, for scripting mocks.
inline std::string stage_tail(const std::string& utt) { return "Utterance:\n" + utt + "\nOperators:" + kGraniteTail; }
inline std::string decompose_tail(const std::string& utt) {
  return "Utterance:\n" + utt + "\nSub-utterances:" + kGraniteTail;
}
inline std::string segment_tail(const std::string& utt) { return "Utterance:\n" + utt + "\nSegments:" + kGraniteTail; }
inline std::string edges_tail(const std::string& utt) { return "Utterance:\n" + utt + "\nEdges:" + kGraniteTail; }
inline std::string props_tail(const std::string& stage, const std::string& sub) {
  return "Stage: " + stage + "\nDescription: " + sub + "\nProperties:" + kGraniteTail;
}

inline nl2flow::StageDef stage(std::string name, int in_min, std::optional<int> in_max, int out_min,
                               std::optional<int> out_max) {
  nl2flow::StageDef s;
  s.name = std::move(name);
  s.description = "test stage " + s.name;
  s.inputs = {in_min, in_max};
  s.outputs = {out_min, out_max};
  return s;
}

}  // namespace testutil
