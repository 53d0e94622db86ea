#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nl2flow/catalog.hpp"
#include "nl2flow/llm.hpp"
#include "nl2flow/trace.hpp"

namespace nl2flow {

struct NodeInstance {
  std::string unique_name;
  std::string stage;
  std::string sub_utterance;
  CardinalityBound inputs;
  CardinalityBound outputs;

  bool operator==(const NodeInstance&) const = default;
};

struct Edge {
  std::string from;
  std::string to;

  auto operator<=>(const Edge&) const = default;
};

enum class AddEdge { Added, Duplicate, UnknownEndpoint, SelfLoop, Cycle };
std::string_view to_string(AddEdge r);

/// Nodes plus an acyclic, loop-free edge set kept in insertion order.
class FlowGraph {
public:
  FlowGraph() = default;
  /// Throws Error when two nodes share a unique name.
  explicit FlowGraph(std::vector<NodeInstance> nodes);

  const std::vector<NodeInstance>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  const NodeInstance* find(std::string_view unique_name) const;
  bool has_edge(std::string_view from, std::string_view to) const;
  int in_degree(std::string_view name) const;
  int out_degree(std::string_view name) const;

  /// Adds the edge unless it is a duplicate, a self-loop, names an unknown
  /// node or would close a cycle.
  AddEdge add_edge(const std::string& from, const std::string& to);

  void set_sub_utterance(std::string_view unique_name, std::string text);

  /// Nodes and edges both compared in order.
  bool operator==(const FlowGraph&) const = default;

private:
  bool reaches(std::string_view from, std::string_view to) const;

  std::vector<NodeInstance> nodes_;
  std::vector<Edge> edges_;
};

/// Unique names for a stage sequence: repeated stages get `_1`, `_2`, ...
/// in order of appearance; single occurrences keep the bare name.
std::vector<std::string> instance_names(std::span<const std::string> stages);

/// One node per predicted stage, named by instance_names(). Throws Error on
/// a stage missing from the catalog.
std::vector<NodeInstance> build_nodes(std::span<const std::string> stages, const Catalog& catalog);

/// Text shared by the segmentation and edge prompts: one node per line.
std::string render_node_list(std::span<const NodeInstance> nodes, const Catalog& catalog, bool with_sub_utterances);

/// Asks which part of the utterance each node handles. The answer holds one
/// `name: span` line per node; every span must occur in the utterance
/// (compared case-insensitively after collapsing whitespace). A single node
/// gets the whole utterance without a call. Throws LlmError(Unparseable) for
/// a missing node or a foreign span.
std::map<std::string, std::string> segment_for_nodes(std::string_view utterance, std::span<const NodeInstance> nodes,
                                                     const Catalog& catalog, LlmProvider& llm,
                                                     const TemplateSet& templates, const CompletionParams& params,
                                                     RunLog& log);
std::map<std::string, std::string> parse_segments(std::string_view answer, std::string_view utterance,
                                                  std::span<const NodeInstance> nodes, RunLog* log = nullptr);

/// `source -> target` lines. Lines without an arrow are skipped.
std::vector<Edge> parse_edge_list(std::string_view text);
std::string format_edge_list(std::span<const Edge> edges);

/// Asks for the flow's edges; unusable edges are dropped and noted. Throws
/// LlmError(Unparseable) when a flow of two or more nodes yields no edge line.
FlowGraph predict_edges(std::span<const NodeInstance> nodes, std::string_view utterance, const Catalog& catalog,
                        LlmProvider& llm, const TemplateSet& templates, const CompletionParams& params,
                        RunLog& log);

/// Adds parsed edges in order, noting each one that is refused.
FlowGraph graph_from_edges(std::vector<NodeInstance> nodes, std::span<const Edge> edges, RunLog* log = nullptr);

enum class Direction { Inputs, Outputs };
std::string_view to_string(Direction d);

struct CardinalityViolation {
  std::string node;
  Direction direction = Direction::Inputs;
  int actual = 0;
  CardinalityBound bound;

  bool over() const { return bound.above_max(actual); }
  bool operator==(const CardinalityViolation&) const = default;
};

std::string to_string(const CardinalityViolation& v);

/// Every node whose in- or out-degree falls outside its bounds, in node order.
std::vector<CardinalityViolation> validate_cardinality(const FlowGraph& g);

struct RepairReport {
  FlowGraph graph;
  std::vector<std::string> actions;
  /// Original unique name -> names it now goes by, for every node that was
  /// split or renumbered.
  std::map<std::string, std::vector<std::string>> renames;
};

/// Splits overloaded source/sink nodes where each copy can take exactly one
/// edge, then drops edges in reverse insertion order until no maximum is
/// exceeded. Minimum violations are left alone.
RepairReport repair_with_report(const FlowGraph& g);
FlowGraph repair(const FlowGraph& g);

struct EdgeMetrics {
  double similarity = 0.0;
  bool exact = false;
};

/// Aligns nodes by stage and suffix order, then scores the aligned edge
/// sets with the Dice coefficient (1 when both are empty). Exact means equal
/// stage multisets and equal aligned edge sets.
EdgeMetrics edge_metrics(const FlowGraph& pred, const FlowGraph& gold);

/// `digraph flow { ... }` with nodes and edges in lexicographic order.
std::string to_dot(const FlowGraph& g);

}  // namespace nl2flow
