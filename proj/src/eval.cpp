#include "nl2flow/eval.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "json_io.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

double percent(int num, int den) { return den == 0 ? 100.0 : 100.0 * num / den; }

std::string gold_text(const nlohmann::json& v, const std::string& locus) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return format_value(Value(v.get<double>()));
  throw ParseError(locus, "expected a scalar value");
}

}  // namespace

FlowGraph EvalRecord::gold_graph(const Catalog* catalog) const {
  const auto names = instance_names(gold_stages);
  std::vector<NodeInstance> nodes;
  for (std::size_t i = 0; i < gold_stages.size(); ++i) {
    NodeInstance n;
    n.unique_name = names[i];
    n.stage = gold_stages[i];
    if (catalog) {
      if (const auto* def = catalog->find(n.stage)) {
        n.inputs = def->inputs;
        n.outputs = def->outputs;
      }
    }
    nodes.push_back(std::move(n));
  }
  FlowGraph g(std::move(nodes));
  if (gold_edges) {
    for (const auto& e : *gold_edges) g.add_edge(e.from, e.to);
  }
  return g;
}

std::vector<EvalRecord> parse_dataset(std::string_view text, std::string_view source, const Catalog* catalog) {
  if (detail::trim(text).empty()) return {};
  const auto doc = detail::parse_json(text, source);
  if (!doc.is_array()) throw ParseError(std::string(source), "expected an array of records");
  std::vector<EvalRecord> records;
  std::vector<std::string> problems;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto locus = fmt::format("{}[{}]", source, i);
    const auto& j = doc[i];
    EvalRecord r;
    r.id = j.contains("id") ? detail::require_string(j, "id", locus) : fmt::format("{}", i + 1);
    r.utterance = detail::require_string(j, "utterance", locus);
    r.gold_stages = detail::string_list(detail::require_array(j, "gold_stages", locus), locus + ".gold_stages");
    if (j.contains("note")) r.note = detail::require_string(j, "note", locus);
    if (r.gold_stages.empty()) problems.push_back(locus + ": gold_stages is empty");
    if (!ids.insert(r.id).second) problems.push_back(fmt::format("{}: duplicate id '{}'", locus, r.id));
    if (catalog) {
      for (const auto& s : r.gold_stages) {
        if (!catalog->contains(s)) problems.push_back(fmt::format("{}: unknown stage '{}'", locus, s));
      }
    }
    const auto names = instance_names(r.gold_stages);
    std::map<std::string, std::string> stage_of;
    for (std::size_t k = 0; k < names.size(); ++k) stage_of[names[k]] = r.gold_stages[k];

    if (j.contains("gold_edges")) {
      const auto lines = detail::string_list(j.at("gold_edges"), locus + ".gold_edges");
      std::vector<Edge> edges;
      for (std::size_t k = 0; k < lines.size(); ++k) {
        auto parsed = parse_edge_list(lines[k]);
        if (parsed.size() != 1) {
          throw ParseError(fmt::format("{}.gold_edges[{}]", locus, k), "expected `source -> target`");
        }
        edges.push_back(parsed.front());
      }
      std::vector<NodeInstance> nodes;
      for (std::size_t k = 0; k < names.size(); ++k) nodes.push_back({names[k], r.gold_stages[k], "", {}, {}});
      FlowGraph g(std::move(nodes));
      for (const auto& e : edges) {
        if (auto res = g.add_edge(e.from, e.to); res != AddEdge::Added) {
          problems.push_back(fmt::format("{}: gold edge {} -> {} refused: {}", locus, e.from, e.to, to_string(res)));
        }
      }
      r.gold_edges = std::move(edges);
    }
    if (j.contains("gold_properties")) {
      const auto& gp = j.at("gold_properties");
      if (!gp.is_object()) throw ParseError(locus + ".gold_properties", "expected an object keyed by node");
      std::map<std::string, std::vector<GoldProperty>> props;
      for (const auto& [node, list] : gp.items()) {
        const auto nlocus = locus + ".gold_properties." + node;
        if (!list.is_array()) throw ParseError(nlocus, "expected an array");
        auto stage = stage_of.find(node);
        if (stage == stage_of.end()) {
          problems.push_back(fmt::format("{}: gold properties for unknown node '{}'", locus, node));
        }
        auto& out = props[node];
        for (std::size_t k = 0; k < list.size(); ++k) {
          const auto plocus = fmt::format("{}[{}]", nlocus, k);
          GoldProperty p{detail::require_string(list[k], "name", plocus),
                         gold_text(detail::require(list[k], "value", plocus), plocus + ".value")};
          if (catalog && stage != stage_of.end()) {
            const auto* def = catalog->find(stage->second);
            if (def && !def->find_property(p.name)) {
              problems.push_back(fmt::format("{}: stage '{}' has no property '{}'", plocus, stage->second, p.name));
            }
          }
          out.push_back(std::move(p));
        }
      }
      r.gold_properties = std::move(props);
    }
    records.push_back(std::move(r));
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return records;
}

std::vector<EvalRecord> load_dataset(const std::filesystem::path& path, const Catalog* catalog) {
  return parse_dataset(detail::read_text_file(path), path.string(), catalog);
}

StageAccuracy stage_accuracy(std::span<const std::vector<std::string>> predictions,
                             std::span<const std::vector<std::string>> golds) {
  if (predictions.size() != golds.size()) {
    throw Error(fmt::format("{} predictions for {} gold records", predictions.size(), golds.size()));
  }
  StageAccuracy a;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool ok = to_multiset(predictions[i]) == to_multiset(golds[i]);
    ++a.count;
    a.correct += ok;
    if (golds[i].size() <= 1) {
      ++a.one_op_count;
      a.one_op_correct += ok;
    } else {
      ++a.n_op_count;
      a.n_op_correct += ok;
    }
  }
  a.total = percent(a.correct, a.count);
  a.one_op = percent(a.one_op_correct, a.one_op_count);
  a.n_op = percent(a.n_op_correct, a.n_op_count);
  return a;
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::Stages: return "stages";
    case Measure::Edges: return "edges";
    case Measure::Props: return "props";
  }
  return "?";
}

std::set<Measure> parse_measures(std::string_view list) {
  std::set<Measure> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string_view::npos) comma = list.size();
    const auto item = detail::to_lower(detail::trim(list.substr(start, comma - start)));
    if (item == "stages") {
      out.insert(Measure::Stages);
    } else if (item == "edges") {
      out.insert(Measure::Edges);
    } else if (item == "props" || item == "properties") {
      out.insert(Measure::Props);
    } else if (!item.empty()) {
      throw Error(fmt::format("unknown measure '{}' (expected stages, edges, props)", item));
    }
    start = comma + 1;
  }
  if (out.empty()) throw Error("no measure given");
  return out;
}

EvalReport run_eval(std::span<const EvalRecord> records, const Resources& res, const EvalOptions& options) {
  if (options.strategies.empty()) throw Error("no strategy to evaluate");
  EvalReport report;
  report.records = static_cast<int>(records.size());
  const auto ctx = res.stage_context();
  std::vector<std::vector<std::string>> golds;
  for (const auto& r : records) golds.push_back(r.gold_stages);

  if (options.measures.contains(Measure::Stages)) {
    for (auto strategy : options.strategies) {
      StrategyResult result;
      result.strategy = strategy;
      result.predictions.resize(records.size());
      std::vector<RunLog> logs(records.size());
      std::vector<std::optional<EvalFailure>> failures(records.size());
      detail::fan_out(records.size(), options.parallel, [&](std::size_t i) {
        try {
          auto p = predict_stages(strategy, records[i].utterance, ctx);
          result.predictions[i] = std::move(p.stages);
          logs[i] = std::move(p.log);
        } catch (const Error& e) {
          failures[i] = EvalFailure{records[i].id, std::string(to_string(strategy)), "stages", e.what()};
        }
      });
      result.accuracy = stage_accuracy(result.predictions, golds);
      long prompt = 0, stage_prompt = 0;
      for (const auto& log : logs) {
        for (const auto& req : log.requests()) {
          ++result.tokens.requests;
          prompt += req.prompt_tokens;
          if (req.task == "stage") {
            ++result.tokens.stage_requests;
            stage_prompt += req.prompt_tokens;
          }
        }
      }
      if (result.tokens.requests) result.tokens.mean_prompt_tokens = static_cast<double>(prompt) / result.tokens.requests;
      if (result.tokens.stage_requests) {
        result.tokens.mean_stage_prompt_tokens = static_cast<double>(stage_prompt) / result.tokens.stage_requests;
      }
      for (auto& f : failures) {
        if (f) report.failures.push_back(std::move(*f));
      }
      report.strategies.push_back(std::move(result));
    }
  }

  const bool want_edges = options.measures.contains(Measure::Edges);
  const bool want_props = options.measures.contains(Measure::Props);
  if (!want_edges && !want_props) return report;

  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if ((want_edges && records[i].gold_edges) || (want_props && records[i].gold_properties)) chosen.push_back(i);
  }
  const auto strategy = options.strategies.front();
  std::vector<std::optional<Workflow>> flows(chosen.size());
  std::vector<std::optional<EvalFailure>> failures(chosen.size());
  detail::fan_out(chosen.size(), options.parallel, [&](std::size_t k) {
    const auto& r = records[chosen[k]];
    try {
      flows[k] = generate(r.utterance, res, strategy);
    } catch (const PipelineError& e) {
      failures[k] = EvalFailure{r.id, std::string(to_string(strategy)), e.step(), e.message()};
    } catch (const Error& e) {
      failures[k] = EvalFailure{r.id, std::string(to_string(strategy)), "pipeline", e.what()};
    }
  });
  for (auto& f : failures) {
    if (f) report.failures.push_back(std::move(*f));
  }

  if (want_edges) {
    EdgeSummary s;
    double sim = 0.0;
    int exact = 0;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const auto& r = records[chosen[k]];
      if (!r.gold_edges) continue;
      ++s.flows;
      if (!flows[k]) continue;
      const auto m = edge_metrics(flows[k]->graph, r.gold_graph(&res.catalog));
      sim += m.similarity;
      exact += m.exact;
    }
    if (s.flows) {
      s.mean_similarity = sim / s.flows;
      s.exact_rate = percent(exact, s.flows);
    }
    report.edges = s;
  }

  if (want_props) {
    PropSummary s;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const auto& r = records[chosen[k]];
      if (!r.gold_properties) continue;
      ++s.flows;
      const auto names = instance_names(r.gold_stages);
      std::map<std::string, std::string> gold_stage;
      for (std::size_t n = 0; n < names.size(); ++n) gold_stage[names[n]] = r.gold_stages[n];

      std::vector<ScoredProperty> gold, predicted;
      for (const auto& [node, list] : *r.gold_properties) {
        const auto* def = res.catalog.find(gold_stage[node]);
        for (const auto& p : list) {
          gold.push_back({node, p.name, canonical_value(p.value, def ? def->find_property(p.name) : nullptr)});
        }
      }
      if (flows[k]) {
        for (const auto& [node, list] : flows[k]->properties) {
          const auto* inst = flows[k]->graph.find(node);
          const auto* def = inst ? res.catalog.find(inst->stage) : nullptr;
          for (const auto& a : list) {
            const auto raw = a.value ? format_value(*a.value) : a.raw_value;
            predicted.push_back({node, a.name, canonical_value(raw, def ? def->find_property(a.name) : nullptr)});
          }
        }
      }
      s.counts += prop_counts(predicted, gold);
    }
    s.metrics = metrics_from_counts(s.counts);
    report.props = s;
  }
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["records"] = report.records;
  doc["stages"] = ordered_json::array();
  for (const auto& s : report.strategies) {
    const auto& a = s.accuracy;
    ordered_json j;
    j["strategy"] = to_string(s.strategy);
    j["accuracy"] = {{"total", a.total},
                     {"one_op", a.one_op},
                     {"n_op", a.n_op},
                     {"correct", a.correct},
                     {"count", a.count},
                     {"one_op_correct", a.one_op_correct},
                     {"one_op_count", a.one_op_count},
                     {"n_op_correct", a.n_op_correct},
                     {"n_op_count", a.n_op_count}};
    j["tokens"] = {{"requests", s.tokens.requests},
                   {"mean_prompt_tokens", s.tokens.mean_prompt_tokens},
                   {"stage_requests", s.tokens.stage_requests},
                   {"mean_stage_prompt_tokens", s.tokens.mean_stage_prompt_tokens}};
    j["predictions"] = s.predictions;
    doc["stages"].push_back(std::move(j));
  }
  if (report.edges) {
    doc["edges"] = {{"flows", report.edges->flows},
                    {"mean_similarity", report.edges->mean_similarity},
                    {"exact_rate", report.edges->exact_rate}};
  }
  if (report.props) {
    const auto& p = *report.props;
    doc["properties"] = {{"flows", p.flows},
                         {"matched", p.counts.matched},
                         {"predicted", p.counts.predicted},
                         {"gold", p.counts.gold},
                         {"precision", p.metrics.precision},
                         {"recall", p.metrics.recall},
                         {"f1", p.metrics.f1}};
  }
  doc["failures"] = ordered_json::array();
  for (const auto& f : report.failures) {
    doc["failures"].push_back({{"record", f.record}, {"strategy", f.strategy}, {"step", f.step}, {"message", f.message}});
  }
  return doc;
}

std::string emit_report(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

std::string format_report_table(const EvalReport& report) {
  std::string out;
  if (!report.strategies.empty()) {
    out += fmt::format("Stage accuracy [%] over {} records\n", report.records);
    out += fmt::format("{:<10} {:>7} {:>7} {:>7} {:>14} {:>20}\n", "strategy", "total", "1-op", "n-op",
                       "prompt tokens", "stage prompt tokens");
    for (const auto& s : report.strategies) {
      out += fmt::format("{:<10} {:>7.1f} {:>7.1f} {:>7.1f} {:>14.1f} {:>20.1f}\n", to_string(s.strategy),
                         s.accuracy.total, s.accuracy.one_op, s.accuracy.n_op, s.tokens.mean_prompt_tokens,
                         s.tokens.mean_stage_prompt_tokens);
    }
  }
  if (report.edges) {
    if (!out.empty()) out += "\n";
    out += fmt::format("Edges over {} flows\n", report.edges->flows);
    out += fmt::format("{:<12} {:>8}\n", "similarity", "exact");
    out += fmt::format("{:<12.3f} {:>8.1f}\n", report.edges->mean_similarity, report.edges->exact_rate);
  }
  if (report.props) {
    if (!out.empty()) out += "\n";
    const auto& p = *report.props;
    out += fmt::format("Properties over {} flows ({} predicted, {} gold)\n", p.flows, p.counts.predicted, p.counts.gold);
    out += fmt::format("{:<8} {:>8} {:>8}\n", "prec.", "recall", "F1");
    out += fmt::format("{:<8.3f} {:>8.3f} {:>8.3f}\n", p.metrics.precision, p.metrics.recall, p.metrics.f1);
  }
  if (!report.failures.empty()) {
    if (!out.empty()) out += "\n";
    out += fmt::format("{} failure(s)\n", report.failures.size());
    for (const auto& f : report.failures) {
      out += fmt::format("  {} [{}] {}: {}\n", f.record, f.strategy, f.step, f.message);
    }
  }
  return out;
}

}  // namespace nl2flow
