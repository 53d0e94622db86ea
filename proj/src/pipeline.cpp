#include "nl2flow/pipeline.hpp"

#include <future>

#include <fmt/format.h>

#include "json_io.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

struct EdgeBranch {
  FlowGraph graph;
  std::vector<std::string> repairs;
  std::map<std::string, std::vector<std::string>> renames;
  std::vector<CardinalityViolation> open_violations;
  std::optional<Diagnostic> failure;
  RunLog log;
};

struct NodeProps {
  std::vector<PropertyAssignment> accepted;
  std::vector<PropertyAssignment> rejected;
  std::optional<Diagnostic> failure;
  RunLog log;
};

EdgeBranch run_edges(const std::vector<NodeInstance>& nodes, std::string_view utterance, const Resources& res) {
  EdgeBranch out;
  out.log = RunLog(res.config.full_prompts);
  FlowGraph g;
  try {
    g = predict_edges(nodes, utterance, res.catalog, *res.llm, res.templates, {}, out.log);
  } catch (const Error& e) {
    out.failure = Diagnostic{"edges", e.what()};
    out.log.note("edges", std::string("edge prediction failed; continuing without edges: ") + e.what());
    g = FlowGraph(nodes);
  }
  for (const auto& v : validate_cardinality(g)) out.log.note("cardinality", to_string(v));
  auto report = repair_with_report(g);
  for (const auto& a : report.actions) out.log.note("repair", a);
  out.graph = std::move(report.graph);
  out.repairs = std::move(report.actions);
  out.renames = std::move(report.renames);
  out.open_violations = validate_cardinality(out.graph);
  return out;
}

std::vector<NodeProps> run_properties(const std::vector<NodeInstance>& nodes, const Resources& res) {
  std::vector<NodeProps> out(nodes.size());
  const ValidationOptions options{res.config.dependency_fixpoint};
  detail::fan_out(nodes.size(), res.config.parallel, [&](std::size_t i) {
    auto& slot = out[i];
    slot.log = RunLog(res.config.full_prompts);
    const auto& node = nodes[i];
    try {
      const auto* stage = res.catalog.find(node.stage);
      auto raw = predict_properties(node, *stage, *res.llm, res.templates, {}, slot.log);
      for (auto& a : validate_properties(std::move(raw), *stage, res.registry, options)) {
        if (a.status == PropertyStatus::Accepted) {
          slot.accepted.push_back(std::move(a));
        } else {
          slot.log.note("properties", fmt::format("{}: {} = {} {} ({})", node.unique_name, a.name, a.raw_value,
                                                  to_string(a.status), a.reason));
          slot.rejected.push_back(std::move(a));
        }
      }
    } catch (const std::exception& e) {
      slot.failure = Diagnostic{"properties", fmt::format("{}: {}", node.unique_name, e.what())};
      slot.log.note("properties", slot.failure->message);
    }
  });
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::defaults(const std::filesystem::path& data_dir) {
  PipelineConfig c;
  c.catalog = data_dir / "catalog" / "stages142.json";
  c.examples = data_dir / "fewshot" / "bank142.json";
  c.decomposition_examples = data_dir / "fewshot" / "decomposition.json";
  c.classifier = data_dir / "classifier" / "training.tsv";
  c.registry = data_dir / "registry" / "registry.json";
  c.templates = data_dir / "templates";
  return c;
}

std::unique_ptr<Resources> Resources::load(const PipelineConfig& config) {
  auto res = std::make_unique<Resources>();
  res->config = config;
  res->catalog = load_catalog(config.catalog);
  if (config.classifier_url) {
    res->classifier = std::make_unique<RemoteClassifier>(*config.classifier_url);
  } else {
    const auto pairs = load_training_pairs(config.classifier);
    res->classifier =
        std::make_unique<LexicalClassifier>(train(pairs, &res->catalog, config.classifier_threshold));
  }
  res->bank = load_fewshot_bank(config.examples, &res->catalog);
  res->decomposition_examples = load_decomposition_examples(config.decomposition_examples);
  if (!config.registry.empty()) res->registry = ExternalRegistry::load(config.registry);
  res->templates = TemplateSet::load(config.templates, config.family);
  if (config.mock_scripts) {
    res->llm = std::make_unique<MockProvider>(MockProvider::parse_scripts(
        detail::read_text_file(*config.mock_scripts), config.mock_scripts->string()));
  } else if (config.http) {
    res->llm = std::make_unique<HttpProvider>(*config.http);
  } else {
    throw Error("no LLM configured: give mock scripts or set LLM_ENDPOINT");
  }
  return res;
}

StagePredictionContext Resources::stage_context() const {
  StagePredictionContext ctx;
  ctx.catalog = &catalog;
  ctx.classifier = classifier.get();
  ctx.bank = bank;
  ctx.decomposition_examples = decomposition_examples;
  ctx.llm = llm.get();
  ctx.templates = &templates;
  ctx.example_cap = config.example_cap;
  ctx.max_agent_steps = config.max_agent_steps;
  ctx.keep_prompts = config.full_prompts;
  return ctx;
}

Workflow generate(std::string_view utterance, const Resources& res) {
  return generate(utterance, res, res.config.strategy);
}

Workflow generate(std::string_view utterance, const Resources& res, Strategy strategy) {
  Workflow w;
  w.log = RunLog(res.config.full_prompts);

  StagePrediction prediction;
  try {
    prediction = predict_stages(strategy, utterance, res.stage_context());
  } catch (const Error& e) {
    throw PipelineError("stages", e.what(), std::nullopt, w.log);
  }
  w.log.append(prediction.log);
  w.stages = prediction.stages;
  if (w.stages.empty()) throw PipelineError("stages", "no stages predicted", w, w.log);

  auto nodes = build_nodes(w.stages, res.catalog);
  w.graph = FlowGraph(nodes);
  try {
    for (const auto& [name, span] :
         segment_for_nodes(utterance, nodes, res.catalog, *res.llm, res.templates, {}, w.log)) {
      for (auto& n : nodes) {
        if (n.unique_name == name) n.sub_utterance = span;
      }
    }
  } catch (const Error& e) {
    throw PipelineError("segment", e.what(), w, w.log);
  }
  w.graph = FlowGraph(nodes);

  EdgeBranch edges;
  std::vector<NodeProps> props;
  switch (res.config.branch_order) {
    case BranchOrder::Concurrent: {
      auto edge_future = std::async(std::launch::async, [&] { return run_edges(nodes, utterance, res); });
      props = run_properties(nodes, res);
      edges = edge_future.get();
      break;
    }
    case BranchOrder::EdgesFirst:
      edges = run_edges(nodes, utterance, res);
      props = run_properties(nodes, res);
      break;
    case BranchOrder::PropertiesFirst:
      props = run_properties(nodes, res);
      edges = run_edges(nodes, utterance, res);
      break;
  }

  // Merge in a fixed order so the log never depends on scheduling.
  w.log.append(edges.log);
  for (const auto& p : props) w.log.append(p.log);
  if (edges.failure) w.diagnostics.push_back(*edges.failure);
  for (const auto& p : props) {
    if (p.failure) w.diagnostics.push_back(*p.failure);
  }

  w.graph = std::move(edges.graph);
  w.repairs = std::move(edges.repairs);
  w.open_violations = std::move(edges.open_violations);
  for (const auto& n : w.graph.nodes()) w.properties[n.unique_name];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& original = nodes[i].unique_name;
    auto it = edges.renames.find(original);
    const std::vector<std::string> targets = it == edges.renames.end() ? std::vector<std::string>{original} : it->second;
    for (const auto& t : targets) {
      w.properties[t] = props[i].accepted;
      if (!props[i].rejected.empty()) w.rejected[t] = props[i].rejected;
    }
  }
  return w;
}

nlohmann::ordered_json workflow_to_json(const Workflow& w, bool with_provenance) {
  using nlohmann::ordered_json;
  auto value_json = [](const Value& v) -> ordered_json {
    switch (v.index()) {
      case 0: return std::get<bool>(v);
      case 1: return std::get<std::int64_t>(v);
      case 2: return std::get<double>(v);
      default: return std::get<std::string>(v);
    }
  };
  std::vector<const NodeInstance*> nodes;
  for (const auto& n : w.graph.nodes()) nodes.push_back(&n);
  std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->unique_name < b->unique_name; });

  ordered_json doc;
  doc["nodes"] = ordered_json::array();
  for (const auto* n : nodes) {
    ordered_json node = {{"unique_name", n->unique_name}, {"stage", n->stage}, {"sub_utterance", n->sub_utterance}};
    node["properties"] = ordered_json::array();
    if (auto it = w.properties.find(n->unique_name); it != w.properties.end()) {
      for (const auto& a : it->second) {
        node["properties"].push_back({{"name", a.name}, {"value", a.value ? value_json(*a.value) : ordered_json(a.raw_value)}});
      }
    }
    doc["nodes"].push_back(std::move(node));
  }
  std::vector<Edge> edges = w.graph.edges();
  std::sort(edges.begin(), edges.end());
  doc["edges"] = ordered_json::array();
  for (const auto& e : edges) doc["edges"].push_back({{"from", e.from}, {"to", e.to}});

  if (!w.diagnostics.empty()) {
    doc["diagnostics"] = ordered_json::array();
    for (const auto& d : w.diagnostics) doc["diagnostics"].push_back({{"step", d.step}, {"message", d.message}});
  }
  if (with_provenance) {
    ordered_json p;
    p["stages"] = w.stages;
    p["repairs"] = w.repairs;
    p["open_violations"] = ordered_json::array();
    for (const auto& v : w.open_violations) p["open_violations"].push_back(to_string(v));
    p["rejected_properties"] = ordered_json::object();
    for (const auto& [node, list] : w.rejected) {
      auto& arr = p["rejected_properties"][node] = ordered_json::array();
      for (const auto& a : list) {
        arr.push_back({{"name", a.name}, {"value", a.raw_value}, {"status", to_string(a.status)}, {"reason", a.reason}});
      }
    }
    p["trace"] = to_json(w.log);
    doc["provenance"] = std::move(p);
  }
  return doc;
}

std::string emit_workflow(const Workflow& w, bool with_provenance) {
  return workflow_to_json(w, with_provenance).dump(2) + "\n";
}

std::string emit_dot(const Workflow& w) { return to_dot(w.graph); }

std::string emit_diagnostics(const PipelineError& e, bool with_provenance) {
  nlohmann::ordered_json doc;
  doc["error"] = {{"step", e.step()}, {"message", e.message()}};
  if (e.partial()) doc["partial"] = workflow_to_json(*e.partial(), with_provenance);
  doc["trace"] = to_json(e.log());
  return doc.dump(2) + "\n";
}

FlowGraph graph_from_workflow_json(const nlohmann::json& doc, std::string_view source) {
  const std::string src(source);
  const auto& nodes_json = detail::require_array(doc, "nodes", src);
  std::vector<NodeInstance> nodes;
  for (std::size_t i = 0; i < nodes_json.size(); ++i) {
    const auto locus = fmt::format("{}.nodes[{}]", src, i);
    NodeInstance n;
    n.unique_name = detail::require_string(nodes_json[i], "unique_name", locus);
    n.stage = detail::require_string(nodes_json[i], "stage", locus);
    if (nodes_json[i].contains("sub_utterance")) n.sub_utterance = detail::require_string(nodes_json[i], "sub_utterance", locus);
    nodes.push_back(std::move(n));
  }
  FlowGraph g;
  try {
    g = FlowGraph(std::move(nodes));
  } catch (const Error& e) {
    throw ParseError(src + ".nodes", e.what());
  }
  const auto& edges_json = detail::require_array(doc, "edges", src);
  for (std::size_t i = 0; i < edges_json.size(); ++i) {
    const auto locus = fmt::format("{}.edges[{}]", src, i);
    const auto from = detail::require_string(edges_json[i], "from", locus);
    const auto to = detail::require_string(edges_json[i], "to", locus);
    if (auto r = g.add_edge(from, to); r != AddEdge::Added) {
      throw ParseError(locus, fmt::format("edge {} -> {} refused: {}", from, to, to_string(r)));
    }
  }
  return g;
}

}  // namespace nl2flow
