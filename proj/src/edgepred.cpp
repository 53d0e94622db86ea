#include "nl2flow/edgepred.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include <fmt/format.h>

#include "nl2flow/error.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

std::string_view strip_decoration(std::string_view s) {
  s = detail::trim(s);
  if (s.starts_with("- ")) s = detail::trim(s.substr(2));
  while (!s.empty() && (s.back() == ';' || s.back() == ',' || s.back() == '.')) s.remove_suffix(1);
  s = detail::trim(s);
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'' || s.front() == '`') && s.back() == s.front()) {
    s = detail::trim(s.substr(1, s.size() - 2));
  }
  return s;
}

/// Suffix index of `name` as an instance of `stage`: 0 for the bare name.
int suffix_index(const std::string& name, const std::string& stage) {
  if (name == stage) return 0;
  if (name.size() > stage.size() + 1 && name.starts_with(stage) && name[stage.size()] == '_') {
    int n = 0;
    auto tail = std::string_view(name).substr(stage.size() + 1);
    auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), n);
    if (ec == std::errc() && p == tail.data() + tail.size()) return n;
  }
  return std::numeric_limits<int>::max();
}

}  // namespace

std::string_view to_string(AddEdge r) {
  switch (r) {
    case AddEdge::Added: return "added";
    case AddEdge::Duplicate: return "duplicate";
    case AddEdge::UnknownEndpoint: return "unknown endpoint";
    case AddEdge::SelfLoop: return "self-loop";
    case AddEdge::Cycle: return "would create a cycle";
  }
  return "?";
}

FlowGraph::FlowGraph(std::vector<NodeInstance> nodes) : nodes_(std::move(nodes)) {
  std::set<std::string_view> seen;
  for (const auto& n : nodes_) {
    if (!seen.insert(n.unique_name).second) throw Error(fmt::format("duplicate node name '{}'", n.unique_name));
  }
}

const NodeInstance* FlowGraph::find(std::string_view unique_name) const {
  for (const auto& n : nodes_) {
    if (n.unique_name == unique_name) return &n;
  }
  return nullptr;
}

bool FlowGraph::has_edge(std::string_view from, std::string_view to) const {
  return std::any_of(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.from == from && e.to == to; });
}

int FlowGraph::in_degree(std::string_view name) const {
  return static_cast<int>(std::count_if(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.to == name; }));
}

int FlowGraph::out_degree(std::string_view name) const {
  return static_cast<int>(std::count_if(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.from == name; }));
}

bool FlowGraph::reaches(std::string_view from, std::string_view to) const {
  std::vector<std::string_view> stack{from};
  std::set<std::string_view> seen{from};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    if (cur == to) return true;
    for (const auto& e : edges_) {
      if (e.from == cur && seen.insert(e.to).second) stack.push_back(e.to);
    }
  }
  return false;
}

AddEdge FlowGraph::add_edge(const std::string& from, const std::string& to) {
  if (!find(from) || !find(to)) return AddEdge::UnknownEndpoint;
  if (from == to) return AddEdge::SelfLoop;
  if (has_edge(from, to)) return AddEdge::Duplicate;
  if (reaches(to, from)) return AddEdge::Cycle;
  edges_.push_back({from, to});
  return AddEdge::Added;
}

void FlowGraph::set_sub_utterance(std::string_view unique_name, std::string text) {
  for (auto& n : nodes_) {
    if (n.unique_name == unique_name) {
      n.sub_utterance = std::move(text);
      return;
    }
  }
  throw Error(fmt::format("no node named '{}'", unique_name));
}

std::vector<std::string> instance_names(std::span<const std::string> stages) {
  std::map<std::string, int> total, seen;
  for (const auto& s : stages) ++total[s];
  std::vector<std::string> names;
  for (const auto& s : stages) names.push_back(total[s] == 1 ? s : fmt::format("{}_{}", s, ++seen[s]));
  return names;
}

std::vector<NodeInstance> build_nodes(std::span<const std::string> stages, const Catalog& catalog) {
  const auto names = instance_names(stages);
  std::vector<NodeInstance> nodes;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto* def = catalog.find(stages[i]);
    if (!def) throw Error(fmt::format("unknown stage '{}'", stages[i]));
    NodeInstance n;
    n.stage = stages[i];
    n.unique_name = names[i];
    n.inputs = def->inputs;
    n.outputs = def->outputs;
    nodes.push_back(std::move(n));
  }
  return nodes;
}

std::string render_node_list(std::span<const NodeInstance> nodes, const Catalog& catalog, bool with_sub_utterances) {
  std::string out;
  for (const auto& n : nodes) {
    if (with_sub_utterances) {
      out += fmt::format("- {} ({}; inputs {}; outputs {}): {}\n", n.unique_name, n.stage, to_string(n.inputs),
                         to_string(n.outputs), n.sub_utterance);
    } else {
      const auto* def = catalog.find(n.stage);
      out += fmt::format("- {} ({}): {}\n", n.unique_name, n.stage, def ? def->description : std::string());
    }
  }
  return out;
}

std::map<std::string, std::string> parse_segments(std::string_view answer, std::string_view utterance,
                                                  std::span<const NodeInstance> nodes, RunLog* log) {
  std::set<std::string_view> names;
  for (const auto& n : nodes) names.insert(n.unique_name);
  const auto haystack = detail::to_lower(detail::normalize_space(utterance));

  std::map<std::string, std::string> out;
  for (auto line : detail::split_lines(answer)) {
    line = detail::trim(line);
    if (line.starts_with("- ")) line = detail::trim(line.substr(2));
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const auto name = strip_decoration(line.substr(0, colon));
    if (!names.contains(name)) {
      if (log) log->note("segment", fmt::format("ignored line for unknown node '{}'", name));
      continue;
    }
    const auto span = strip_decoration(line.substr(colon + 1));
    if (out.contains(std::string(name))) {
      if (log) log->note("segment", fmt::format("kept first assignment for '{}'", name));
      continue;
    }
    if (span.empty()) continue;
    if (haystack.find(detail::to_lower(detail::normalize_space(span))) == std::string::npos) {
      throw LlmError(LlmError::Kind::Unparseable,
                     fmt::format("sub-utterance for node '{}' is not part of the utterance: \"{}\"", name, span));
    }
    out.emplace(std::string(name), std::string(span));
  }
  for (const auto& n : nodes) {
    if (!out.contains(n.unique_name)) {
      throw LlmError(LlmError::Kind::Unparseable, fmt::format("no sub-utterance assigned to node '{}'", n.unique_name));
    }
  }
  return out;
}

std::map<std::string, std::string> segment_for_nodes(std::string_view utterance, std::span<const NodeInstance> nodes,
                                                     const Catalog& catalog, LlmProvider& llm,
                                                     const TemplateSet& templates, const CompletionParams& params,
                                                     RunLog& log) {
  if (nodes.empty()) throw Error("segmentation needs at least one node");
  if (nodes.size() == 1) {
    log.note("segment", "single node takes the whole utterance");
    return {{nodes.front().unique_name, std::string(detail::trim(utterance))}};
  }
  auto prompt = render_prompt(templates.get("segment"), {{"nodes", render_node_list(nodes, catalog, false)},
                                                         {"utterance", std::string(utterance)}});
  auto answer = call_llm(llm, "segment", prompt, params, log);
  auto segments = parse_segments(answer.text, utterance, nodes, &log);
  for (const auto& [name, span] : segments) log.note("segment", fmt::format("{}: {}", name, span));
  return segments;
}

std::vector<Edge> parse_edge_list(std::string_view text) {
  std::vector<Edge> edges;
  for (auto line : detail::split_lines(text)) {
    const auto arrow = line.find("->");
    if (arrow == std::string_view::npos) continue;
    Edge e{std::string(strip_decoration(line.substr(0, arrow))), std::string(strip_decoration(line.substr(arrow + 2)))};
    if (e.from.empty() || e.to.empty()) continue;
    edges.push_back(std::move(e));
  }
  return edges;
}

std::string format_edge_list(std::span<const Edge> edges) {
  std::string out;
  for (const auto& e : edges) out += fmt::format("{} -> {}\n", e.from, e.to);
  return out;
}

FlowGraph graph_from_edges(std::vector<NodeInstance> nodes, std::span<const Edge> edges, RunLog* log) {
  FlowGraph g(std::move(nodes));
  for (const auto& e : edges) {
    const auto r = g.add_edge(e.from, e.to);
    if (r != AddEdge::Added && log) log->note("edges", fmt::format("dropped {} -> {}: {}", e.from, e.to, to_string(r)));
  }
  return g;
}

FlowGraph predict_edges(std::span<const NodeInstance> nodes, std::string_view utterance, const Catalog& catalog,
                        LlmProvider& llm, const TemplateSet& templates, const CompletionParams& params,
                        RunLog& log) {
  std::vector<NodeInstance> owned(nodes.begin(), nodes.end());
  if (owned.size() < 2) return FlowGraph(std::move(owned));
  auto prompt = render_prompt(templates.get("edges"), {{"nodes", render_node_list(nodes, catalog, true)},
                                                       {"utterance", std::string(utterance)}});
  auto answer = call_llm(llm, "edges", prompt, params, log);
  const auto edges = parse_edge_list(answer.text);
  if (edges.empty()) {
    throw LlmError(LlmError::Kind::Unparseable, "edge answer contains no `source -> target` line");
  }
  auto g = graph_from_edges(std::move(owned), edges, &log);
  log.note("edges", fmt::format("{} of {} predicted edges kept", g.edges().size(), edges.size()));
  return g;
}

std::string_view to_string(Direction d) { return d == Direction::Inputs ? "inputs" : "outputs"; }

std::string to_string(const CardinalityViolation& v) {
  return fmt::format("{}: {} {} {} allowed {}", v.node, v.actual, to_string(v.direction),
                     v.over() ? "exceeds" : "falls short of", to_string(v.bound));
}

std::vector<CardinalityViolation> validate_cardinality(const FlowGraph& g) {
  std::vector<CardinalityViolation> out;
  for (const auto& n : g.nodes()) {
    const int in = g.in_degree(n.unique_name);
    const int outd = g.out_degree(n.unique_name);
    if (!n.inputs.admits(in)) out.push_back({n.unique_name, Direction::Inputs, in, n.inputs});
    if (!n.outputs.admits(outd)) out.push_back({n.unique_name, Direction::Outputs, outd, n.outputs});
  }
  return out;
}

RepairReport repair_with_report(const FlowGraph& g) {
  struct Work {
    NodeInstance node;
    std::string origin;
  };
  std::vector<Work> work;
  for (const auto& n : g.nodes()) work.push_back({n, n.unique_name});
  std::vector<Edge> edges = g.edges();
  RepairReport report;

  auto degree = [&](const std::string& name, Direction d) {
    return static_cast<int>(std::count_if(edges.begin(), edges.end(), [&](const Edge& e) {
      return (d == Direction::Inputs ? e.to : e.from) == name;
    }));
  };
  auto rename_everywhere = [&](const std::map<std::string, std::string>& mapping) {
    for (auto& w : work) {
      if (auto it = mapping.find(w.node.unique_name); it != mapping.end()) w.node.unique_name = it->second;
    }
    for (auto& e : edges) {
      if (auto it = mapping.find(e.from); it != mapping.end()) e.from = it->second;
      if (auto it = mapping.find(e.to); it != mapping.end()) e.to = it->second;
    }
  };

  // Pass 1: split sources with too many outputs and sinks with too many inputs.
  for (std::size_t i = 0; i < work.size();) {
    const auto node = work[i].node;
    const int in = degree(node.unique_name, Direction::Inputs);
    const int out = degree(node.unique_name, Direction::Outputs);
    std::optional<Direction> split;
    if (node.outputs.above_max(out) && in == 0 && node.inputs.admits(0) && *node.outputs.max >= 1 &&
        node.outputs.min <= 1) {
      split = Direction::Outputs;
    } else if (node.inputs.above_max(in) && out == 0 && node.outputs.admits(0) && *node.inputs.max >= 1 &&
               node.inputs.min <= 1) {
      split = Direction::Inputs;
    }
    if (!split) {
      ++i;
      continue;
    }
    const int k = *split == Direction::Outputs ? out : in;
    std::vector<Work> copies;
    for (int j = 0; j < k; ++j) {
      Work c = work[i];
      c.node.unique_name = fmt::format("{}\x1f{}", node.unique_name, j);
      copies.push_back(std::move(c));
    }
    int next = 0;
    for (auto& e : edges) {
      auto& end = *split == Direction::Outputs ? e.from : e.to;
      if (end == node.unique_name) end = copies[next++].node.unique_name;
    }
    work.erase(work.begin() + static_cast<std::ptrdiff_t>(i));
    work.insert(work.begin() + static_cast<std::ptrdiff_t>(i), copies.begin(), copies.end());

    // Renumber every instance of the stage so suffixes stay contiguous.
    std::map<std::string, std::string> mapping;
    int index = 0;
    for (const auto& w : work) {
      if (w.node.stage == node.stage) mapping[w.node.unique_name] = fmt::format("{}_{}", node.stage, ++index);
    }
    rename_everywhere(mapping);
    std::vector<std::string> names;
    for (std::size_t j = i; j < i + copies.size(); ++j) names.push_back(work[j].node.unique_name);
    report.actions.push_back(fmt::format("split {} over its {} into {}", node.unique_name, to_string(*split),
                                         detail::join(names, ", ")));
    i += copies.size();
  }

  // Pass 2: drop the latest edges of anything still over a maximum.
  std::map<std::string, const NodeInstance*> by_name;
  for (const auto& w : work) by_name[w.node.unique_name] = &w.node;
  for (std::size_t i = edges.size(); i-- > 0;) {
    const auto& e = edges[i];
    const auto* src = by_name.at(e.from);
    const auto* dst = by_name.at(e.to);
    const bool src_over = src->outputs.above_max(degree(e.from, Direction::Outputs));
    const bool dst_over = dst->inputs.above_max(degree(e.to, Direction::Inputs));
    if (!src_over && !dst_over) continue;
    report.actions.push_back(fmt::format("removed {} -> {} ({} over {} {})", e.from, e.to,
                                         src_over ? e.from : e.to, src_over ? "outputs" : "inputs",
                                         to_string(src_over ? src->outputs : dst->inputs)));
    edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(i));
  }

  std::vector<NodeInstance> nodes;
  std::map<std::string, std::vector<std::string>> by_origin;
  for (const auto& w : work) {
    nodes.push_back(w.node);
    by_origin[w.origin].push_back(w.node.unique_name);
  }
  for (auto& [origin, names] : by_origin) {
    if (names.size() != 1 || names.front() != origin) report.renames.emplace(origin, std::move(names));
  }
  report.graph = FlowGraph(std::move(nodes));
  for (const auto& e : edges) report.graph.add_edge(e.from, e.to);
  return report;
}

FlowGraph repair(const FlowGraph& g) { return repair_with_report(g).graph; }

EdgeMetrics edge_metrics(const FlowGraph& pred, const FlowGraph& gold) {
  auto align = [](const FlowGraph& g) {
    std::map<std::string, std::vector<std::pair<int, std::size_t>>> by_stage;
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
      const auto& n = g.nodes()[i];
      by_stage[n.stage].emplace_back(suffix_index(n.unique_name, n.stage), i);
    }
    std::map<std::string, std::string> label;
    for (auto& [stage, list] : by_stage) {
      std::sort(list.begin(), list.end());
      for (std::size_t r = 0; r < list.size(); ++r) {
        label[g.nodes()[list[r].second].unique_name] = fmt::format("{}#{}", stage, r);
      }
    }
    std::set<Edge> edges;
    for (const auto& e : g.edges()) edges.insert({label.at(e.from), label.at(e.to)});
    std::multiset<std::string> stages;
    for (const auto& n : g.nodes()) stages.insert(n.stage);
    return std::pair{std::move(edges), std::move(stages)};
  };
  const auto [pe, ps] = align(pred);
  const auto [ge, gs] = align(gold);
  std::size_t common = 0;
  for (const auto& e : pe) common += ge.count(e);
  EdgeMetrics m;
  m.similarity = pe.empty() && ge.empty() ? 1.0 : 2.0 * static_cast<double>(common) / static_cast<double>(pe.size() + ge.size());
  m.exact = ps == gs && pe == ge;
  return m;
}

std::string to_dot(const FlowGraph& g) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  std::vector<std::string> names;
  for (const auto& n : g.nodes()) names.push_back(n.unique_name);
  std::sort(names.begin(), names.end());
  std::vector<Edge> edges = g.edges();
  std::sort(edges.begin(), edges.end());
  std::string out = "digraph flow {\n";
  for (const auto& n : names) out += fmt::format("  {};\n", quote(n));
  for (const auto& e : edges) out += fmt::format("  {} -> {};\n", quote(e.from), quote(e.to));
  out += "}\n";
  return out;
}

}  // namespace nl2flow
