#include <gtest/gtest.h>

#include <algorithm>

#include "nl2flow/pipeline.hpp"
#include "test_util.hpp"

using namespace nl2flow;

namespace {

const std::string kOverloaded = "Read from teradata, then sort it and also filter it";

std::unique_ptr<Resources> resources_with(std::vector<ScriptEntry> scripts, BranchOrder order = BranchOrder::Concurrent) {
  auto config = PipelineConfig::defaults();
  config.mock_scripts = testutil::data_dir() / "mocks" / "eval20.json";
  config.branch_order = order;
  auto res = Resources::load(config);
  res->llm = std::make_unique<MockProvider>(std::move(scripts));
  return res;
}

std::vector<ScriptEntry> overloaded_scripts(const std::string& edges = "teradata -> sort\nteradata -> filter") {
  using namespace testutil;
  return {suffix(decompose_tail(kOverloaded), "- Read from teradata\n- sort it\n- filter it"),
          suffix(stage_tail(kOverloaded), "teradata, sort, filter\""),
          suffix(segment_tail(kOverloaded), "teradata: Read from teradata\nsort: sort it\nfilter: filter it"),
          suffix(edges_tail(kOverloaded), edges),
          contains({"Properties:"}, "")};
}

/// Post-conditions every successful generate() must meet.
void expect_workflow_invariants(const Workflow& w, const Catalog& catalog) {
  std::set<std::string> names;
  for (const auto& n : w.graph.nodes()) {
    EXPECT_TRUE(names.insert(n.unique_name).second) << n.unique_name;
    EXPECT_TRUE(catalog.contains(n.stage)) << n.stage;
    EXPECT_FALSE(n.sub_utterance.empty()) << n.unique_name;
  }
  for (const auto& e : w.graph.edges()) {
    EXPECT_TRUE(names.contains(e.from));
    EXPECT_TRUE(names.contains(e.to));
  }
  for (const auto& v : validate_cardinality(w.graph)) EXPECT_FALSE(v.over()) << to_string(v);
  std::set<std::string> keyed;
  for (const auto& [k, props] : w.properties) {
    keyed.insert(k);
    for (const auto& a : props) EXPECT_EQ(a.status, PropertyStatus::Accepted);
  }
  EXPECT_EQ(keyed, names);
}

}  // namespace

TEST(Pipeline, BranchingMysqlFlow) {
  const auto& res = testutil::eval20_resources();
  const auto& rec = testutil::record("mysql-branching");
  const auto w = generate(rec.utterance, res);
  EXPECT_EQ(w.graph.nodes().size(), 9u);
  EXPECT_EQ(w.graph.edges().size(), 8u);
  EXPECT_TRUE(edge_metrics(w.graph, rec.gold_graph(&res.catalog)).exact);
  for (const auto& [_, props] : w.properties) EXPECT_TRUE(props.empty());
  EXPECT_TRUE(w.diagnostics.empty());
  expect_workflow_invariants(w, res.catalog);
}

TEST(Pipeline, UseTailIsOneNode) {
  const auto& res = testutil::eval20_resources();
  const auto w = generate("Use Tail", res);
  ASSERT_EQ(w.graph.nodes().size(), 1u);
  EXPECT_EQ(w.graph.nodes()[0].unique_name, "tail");
  EXPECT_EQ(w.graph.nodes()[0].sub_utterance, "Use Tail");
  EXPECT_TRUE(w.graph.edges().empty());
  const auto doc = workflow_to_json(w);
  EXPECT_EQ(doc["nodes"].size(), 1u);
  EXPECT_TRUE(doc["edges"].is_array());
  EXPECT_TRUE(doc["edges"].empty());
}

TEST(Pipeline, EveryShippedRecordMeetsInvariants) {
  const auto& res = testutil::eval20_resources();
  for (const auto& rec : testutil::eval20()) {
    SCOPED_TRACE(rec.id);
    expect_workflow_invariants(generate(rec.utterance, res), res.catalog);
  }
}

TEST(Pipeline, TeradataFlowCarriesValidatedProperties) {
  const auto& res = testutil::eval20_resources();
  const auto w = generate(testutil::record("teradata-linear").utterance, res);
  const auto& td = w.properties.at("teradata");
  ASSERT_EQ(td.size(), 3u);
  EXPECT_EQ(td[0].name, "Connection name");
  EXPECT_EQ(format_value(*td[0].value), "teradata-00");
  const auto& decode = w.properties.at("decode");
  ASSERT_EQ(decode.size(), 1u);
  EXPECT_EQ(format_value(*decode[0].value), "Ceiling");
}

TEST(Pipeline, OverloadedSourceIsRepaired) {
  auto res = resources_with(overloaded_scripts());
  const auto w = generate(kOverloaded, *res);
  EXPECT_EQ(w.graph.edges(), (std::vector<Edge>{{"teradata_1", "sort"}, {"teradata_2", "filter"}}));
  ASSERT_EQ(w.repairs.size(), 1u);
  EXPECT_TRUE(w.properties.contains("teradata_1"));
  EXPECT_TRUE(w.properties.contains("teradata_2"));
  EXPECT_FALSE(w.properties.contains("teradata"));
  EXPECT_TRUE(std::any_of(w.log.trace().begin(), w.log.trace().end(),
                          [](const TraceEntry& t) { return t.step == "repair"; }));
  expect_workflow_invariants(w, res->catalog);
}

TEST(Pipeline, BranchOrderDoesNotMatter) {
  const auto& rec = testutil::record("teradata-linear");
  std::vector<std::string> docs;
  for (auto order : {BranchOrder::Concurrent, BranchOrder::EdgesFirst, BranchOrder::PropertiesFirst}) {
    auto config = PipelineConfig::defaults();
    config.mock_scripts = testutil::data_dir() / "mocks" / "eval20.json";
    config.branch_order = order;
    const auto w = generate(rec.utterance, *Resources::load(config));
    docs.push_back(emit_workflow(w, true));
  }
  EXPECT_EQ(docs[0], docs[1]);
  EXPECT_EQ(docs[0], docs[2]);
}

TEST(Pipeline, RepeatedRunsAreByteIdentical) {
  const auto& res = testutil::eval20_resources();
  for (const auto& rec : testutil::eval20()) {
    const auto a = generate(rec.utterance, res);
    const auto b = generate(rec.utterance, res);
    EXPECT_EQ(emit_workflow(a, true), emit_workflow(b, true)) << rec.id;
    EXPECT_EQ(emit_dot(a), emit_dot(b)) << rec.id;
  }
}

TEST(Pipeline, StageFailureAbortsWithEnvelope) {
  auto res = resources_with({});
  try {
    generate(kOverloaded, *res);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.step(), "stages");
    const auto doc = nlohmann::json::parse(emit_diagnostics(e));
    EXPECT_EQ(doc["error"]["step"], "stages");
    EXPECT_TRUE(doc.contains("trace"));
    EXPECT_FALSE(doc.contains("partial"));
  }
}

TEST(Pipeline, EmptyPredictionIsAStageFailureWithPartial) {
  using namespace testutil;
  const std::string utt = "zebra quokka";
  auto res = resources_with({suffix(decompose_tail(utt), "- zebra quokka")});
  try {
    generate(utt, *res);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.step(), "stages");
    EXPECT_TRUE(e.partial().has_value());
  }
}

TEST(Pipeline, EdgeFailureDegrades) {
  auto res = resources_with(overloaded_scripts("no idea"));
  const auto w = generate(kOverloaded, *res);
  EXPECT_EQ(w.graph.nodes().size(), 3u);
  EXPECT_TRUE(w.graph.edges().empty());
  ASSERT_EQ(w.diagnostics.size(), 1u);
  EXPECT_EQ(w.diagnostics[0].step, "edges");
  EXPECT_TRUE(workflow_to_json(w).contains("diagnostics"));
}

TEST(Pipeline, PropertyFailureDegradesPerNode) {
  using namespace testutil;
  auto scripts = overloaded_scripts("teradata -> sort\nsort -> filter");
  scripts.pop_back();
  scripts.push_back(suffix(props_tail("sort", "sort it"), "Sort key = age"));
  scripts.push_back(suffix(props_tail("filter", "filter it"), ""));
  auto res = resources_with(scripts);
  const auto w = generate(kOverloaded, *res);
  ASSERT_EQ(w.diagnostics.size(), 1u);
  EXPECT_EQ(w.diagnostics[0].step, "properties");
  EXPECT_NE(w.diagnostics[0].message.find("teradata"), std::string::npos);
  EXPECT_EQ(w.properties.at("sort").size(), 1u);
  EXPECT_EQ(w.graph.edges().size(), 2u);
}

TEST(Emit, DotHasEightArrowsForBranchingFlow) {
  const auto& res = testutil::eval20_resources();
  const auto dot = emit_dot(generate(testutil::record("mysql-branching").utterance, res));
  int arrows = 0;
  std::istringstream lines(dot);
  for (std::string line; std::getline(lines, line);) arrows += line.find(" -> ") != std::string::npos;
  EXPECT_EQ(arrows, 8);
}

TEST(Emit, WorkflowDocumentRoundTripsGraph) {
  const auto& res = testutil::eval20_resources();
  const auto w = generate(testutil::record("mysql-branching").utterance, res);
  const auto back = graph_from_workflow_json(nlohmann::json::parse(emit_workflow(w)));
  EXPECT_TRUE(edge_metrics(back, w.graph).exact);
  EXPECT_THROW(graph_from_workflow_json(nlohmann::json::parse(R"({"edges": []})")), ParseError);
}
