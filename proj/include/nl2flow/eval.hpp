#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2flow/catalog.hpp"
#include "nl2flow/edgepred.hpp"
#include "nl2flow/pipeline.hpp"
#include "nl2flow/proppred.hpp"
#include "nl2flow/stagepred.hpp"

namespace nl2flow {

struct GoldProperty {
  std::string name;
  std::string value;  // as written in the dataset

  bool operator==(const GoldProperty&) const = default;
};

struct EvalRecord {
  std::string id;
  std::string utterance;
  std::vector<std::string> gold_stages;
  std::optional<std::vector<Edge>> gold_edges;  // between instance_names(gold_stages)
  std::optional<std::map<std::string, std::vector<GoldProperty>>> gold_properties;
  std::string note;

  /// Gold nodes named by instance_names(), bounds from the catalog when given.
  FlowGraph gold_graph(const Catalog* catalog = nullptr) const;
};

/// Array of {id?, utterance, gold_stages, gold_edges?: ["a -> b"],
/// gold_properties?: {node: [{name, value}]}, note?}. An empty file is an
/// empty dataset. Throws ValidationError when gold edges or properties name
/// nodes the gold stages do not produce, or (with a catalog) on unknown
/// stages and properties.
std::vector<EvalRecord> load_dataset(const std::filesystem::path& path, const Catalog* catalog = nullptr);
std::vector<EvalRecord> parse_dataset(std::string_view text, std::string_view source, const Catalog* catalog = nullptr);

struct StageAccuracy {
  double total = 0.0;  // percentages
  double one_op = 0.0;
  double n_op = 0.0;
  int correct = 0;
  int count = 0;
  int one_op_correct = 0;
  int one_op_count = 0;
  int n_op_correct = 0;
  int n_op_count = 0;
};

/// A prediction is correct when its stage multiset equals the gold one.
/// Buckets split on gold size 1 versus 2 or more; an empty bucket reads 100.
/// Throws Error when the lengths differ.
StageAccuracy stage_accuracy(std::span<const std::vector<std::string>> predictions,
                             std::span<const std::vector<std::string>> golds);

enum class Measure { Stages, Edges, Props };
std::string_view to_string(Measure m);
std::set<Measure> parse_measures(std::string_view list);

struct EvalOptions {
  std::set<Measure> measures{Measure::Stages};
  /// Every listed strategy is scored on stages; edges and properties use
  /// the first one.
  std::vector<Strategy> strategies{Strategy::Cag, Strategy::Single};
  int parallel = 4;
};

struct TokenStats {
  int requests = 0;
  double mean_prompt_tokens = 0.0;  // over every request
  int stage_requests = 0;
  double mean_stage_prompt_tokens = 0.0;  // operator-list prompts only
};

struct StrategyResult {
  Strategy strategy = Strategy::Cag;
  StageAccuracy accuracy;
  TokenStats tokens;
  std::vector<std::vector<std::string>> predictions;  // per record
};

struct EdgeSummary {
  int flows = 0;
  double mean_similarity = 0.0;
  double exact_rate = 0.0;  // percentage
};

struct PropSummary {
  int flows = 0;
  PropCounts counts;
  PropMetrics metrics;
};

struct EvalFailure {
  std::string record;
  std::string strategy;
  std::string step;
  std::string message;
};

struct EvalReport {
  int records = 0;
  std::vector<StrategyResult> strategies;
  std::optional<EdgeSummary> edges;
  std::optional<PropSummary> props;
  std::vector<EvalFailure> failures;
};

/// Runs the requested measurements. A record that fails counts as wrong and
/// is listed under failures; the run carries on.
EvalReport run_eval(std::span<const EvalRecord> records, const Resources& res, const EvalOptions& options);

nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string emit_report(const EvalReport& report);

/// Column-aligned summary in the layout of the accuracy, edge, property and
/// token tables.
std::string format_report_table(const EvalReport& report);

}  // namespace nl2flow
