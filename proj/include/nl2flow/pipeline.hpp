#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2flow/catalog.hpp"
#include "nl2flow/classify.hpp"
#include "nl2flow/edgepred.hpp"
#include "nl2flow/error.hpp"
#include "nl2flow/llm.hpp"
#include "nl2flow/proppred.hpp"
#include "nl2flow/stagepred.hpp"
#include "nl2flow/trace.hpp"

namespace nl2flow {

/// How the edge and property branches are scheduled. The result must not
/// depend on it; the sequential orders exist to check exactly that.
enum class BranchOrder { Concurrent, EdgesFirst, PropertiesFirst };

struct PipelineConfig {
  Strategy strategy = Strategy::Cag;
  ModelFamily family = ModelFamily::Granite;

  std::filesystem::path catalog;
  std::filesystem::path examples;
  std::filesystem::path decomposition_examples;
  std::filesystem::path classifier;  // training pairs
  std::optional<std::string> classifier_url;
  double classifier_threshold = ClassifierModel::kDefaultThreshold;
  std::filesystem::path registry;
  std::filesystem::path templates;

  /// Scripted provider when set; otherwise `http`.
  std::optional<std::filesystem::path> mock_scripts;
  std::optional<HttpProviderConfig> http;

  int parallel = 4;
  std::size_t example_cap = 40;
  int max_agent_steps = 8;
  bool full_prompts = false;
  bool dependency_fixpoint = false;
  BranchOrder branch_order = BranchOrder::Concurrent;

  /// Every path pointing at the shipped data directory.
  static PipelineConfig defaults(const std::filesystem::path& data_dir = NL2FLOW_DATA_DIR);
};

/// Everything loaded from a config, shared read-only by concurrent runs.
struct Resources {
  PipelineConfig config;
  Catalog catalog;
  std::unique_ptr<Classifier> classifier;
  std::vector<FewShotExample> bank;
  std::vector<DecompositionExample> decomposition_examples;
  ExternalRegistry registry;
  TemplateSet templates;
  std::unique_ptr<LlmProvider> llm;

  /// Throws ParseError, ValidationError or Error naming the bad input.
  static std::unique_ptr<Resources> load(const PipelineConfig& config);

  StagePredictionContext stage_context() const;
};

struct Diagnostic {
  std::string step;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

struct Workflow {
  std::vector<std::string> stages;  // as predicted
  FlowGraph graph;
  /// Accepted assignments for every node, keyed by unique name.
  std::map<std::string, std::vector<PropertyAssignment>> properties;
  /// Everything that failed validation, keyed like `properties`.
  std::map<std::string, std::vector<PropertyAssignment>> rejected;
  std::vector<std::string> repairs;
  std::vector<CardinalityViolation> open_violations;  // minimums repair cannot fix
  std::vector<Diagnostic> diagnostics;
  RunLog log;
};

/// A step that cannot degrade failed. Carries what was built so far.
class PipelineError : public Error {
public:
  PipelineError(std::string step, const std::string& message, std::optional<Workflow> partial, RunLog log)
      : Error(step + ": " + message),
        step_(std::move(step)),
        message_(message),
        partial_(std::move(partial)),
        log_(std::move(log)) {}

  const std::string& step() const noexcept { return step_; }
  const std::string& message() const noexcept { return message_; }
  const std::optional<Workflow>& partial() const noexcept { return partial_; }
  const RunLog& log() const noexcept { return log_; }

private:
  std::string step_;
  std::string message_;
  std::optional<Workflow> partial_;
  RunLog log_;
};

/// Stages, nodes, segmentation, then edges and properties side by side.
/// Stage and segmentation failures throw PipelineError; edge and property
/// failures leave a Diagnostic and an emptier result.
Workflow generate(std::string_view utterance, const Resources& res);
Workflow generate(std::string_view utterance, const Resources& res, Strategy strategy);

/// {nodes: [{unique_name, stage, sub_utterance, properties: [{name, value}]}],
///  edges: [{from, to}]}, nodes and edges sorted. Diagnostics are listed
/// when present; the provenance block only on request.
nlohmann::ordered_json workflow_to_json(const Workflow& w, bool with_provenance = false);
std::string emit_workflow(const Workflow& w, bool with_provenance = false);
std::string emit_dot(const Workflow& w);

/// {error: {step, message}, partial?, trace}
std::string emit_diagnostics(const PipelineError& e, bool with_provenance = false);

/// Rebuilds the graph part of a workflow document (bounds are not stored
/// there and come back unbounded).
FlowGraph graph_from_workflow_json(const nlohmann::json& doc, std::string_view source = "<workflow>");

}  // namespace nl2flow
