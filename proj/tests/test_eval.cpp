#include <gtest/gtest.h>

#include <random>

#include "nl2flow/error.hpp"
#include "nl2flow/eval.hpp"
#include "test_util.hpp"

using namespace nl2flow;

namespace {

using Stages = std::vector<std::vector<std::string>>;

EvalOptions stages_only(std::vector<Strategy> strategies = {Strategy::Cag, Strategy::Single}) {
  EvalOptions o;
  o.measures = {Measure::Stages};
  o.strategies = std::move(strategies);
  return o;
}

}  // namespace

TEST(Dataset, ShippedFixtureHasTwentyRecords) {
  const auto& records = testutil::eval20();
  ASSERT_EQ(records.size(), 20u);
  int one = 0;
  for (const auto& r : records) one += r.gold_stages.size() == 1;
  EXPECT_EQ(one, 9);
}

TEST(Dataset, EdgeToUnknownNodeIsRejected) {
  const auto text = R"([{"utterance": "x", "gold_stages": ["sort", "filter"], "gold_edges": ["sort -> head"]}])";
  EXPECT_THROW(parse_dataset(text, "inline"), ValidationError);
}

TEST(Dataset, PropertiesOnUnknownNodeAreRejected) {
  const auto text = R"([{"utterance": "x", "gold_stages": ["sort"], "gold_properties": {"sort_1": []}}])";
  EXPECT_THROW(parse_dataset(text, "inline"), ValidationError);
}

TEST(Dataset, UnknownStageRejectedWithCatalog) {
  const auto text = R"([{"utterance": "x", "gold_stages": ["teleport"]}])";
  EXPECT_NO_THROW(parse_dataset(text, "inline"));
  EXPECT_THROW(parse_dataset(text, "inline", &testutil::catalog142()), ValidationError);
}

TEST(Dataset, EmptyFileIsEmptyDataset) {
  EXPECT_TRUE(parse_dataset("", "empty").empty());
  EXPECT_TRUE(parse_dataset("  \n", "empty").empty());
}

TEST(Dataset, DuplicateStagesGetNumberedNodes) {
  const auto text = R"([{"utterance": "x", "gold_stages": ["fileset", "sort", "fileset"],
                         "gold_edges": ["fileset_1 -> sort", "sort -> fileset_2"]}])";
  const auto records = parse_dataset(text, "inline");
  ASSERT_EQ(records.size(), 1u);
  const auto g = records[0].gold_graph();
  EXPECT_EQ(g.nodes().size(), 3u);
  EXPECT_EQ(g.edges().size(), 2u);
}

TEST(StageAccuracy, UnderPredictionIsWrongInNOpBucket) {
  const Stages preds{{"join_merge"}};
  const Stages golds{{"join_merge", "modify"}};
  const auto a = stage_accuracy(preds, golds);
  EXPECT_EQ(a.correct, 0);
  EXPECT_EQ(a.n_op_count, 1);
  EXPECT_EQ(a.one_op_count, 0);
  EXPECT_DOUBLE_EQ(a.total, 0.0);
  EXPECT_DOUBLE_EQ(a.n_op, 0.0);
}

TEST(StageAccuracy, MultisetEquality) {
  EXPECT_DOUBLE_EQ(stage_accuracy(Stages{{"head", "tail", "head"}}, Stages{{"head", "head", "tail"}}).total, 100.0);
  EXPECT_DOUBLE_EQ(stage_accuracy(Stages{{"head", "tail"}}, Stages{{"head", "head", "tail"}}).total, 0.0);
  EXPECT_DOUBLE_EQ(stage_accuracy(Stages{{"head", "tail", "tail"}}, Stages{{"head", "head", "tail"}}).total, 0.0);
}

TEST(StageAccuracy, AllCorrectMixedBuckets) {
  const Stages golds{{"sort"}, {"head"}, {"tail"}, {"mysql", "sort"}};
  const auto a = stage_accuracy(golds, golds);
  EXPECT_DOUBLE_EQ(a.total, 100.0);
  EXPECT_DOUBLE_EQ(a.one_op, 100.0);
  EXPECT_DOUBLE_EQ(a.n_op, 100.0);
  EXPECT_EQ(a.one_op_count, 3);
  EXPECT_EQ(a.n_op_count, 1);
}

TEST(StageAccuracy, HandCountedPercentages) {
  // 2 of 3 single-stage right, 1 of 2 multi-stage right: 3/5 overall.
  const Stages golds{{"sort"}, {"head"}, {"tail"}, {"mysql", "sort"}, {"copy", "peek"}};
  const Stages preds{{"sort"}, {"tail"}, {"tail"}, {"sort", "mysql"}, {"copy"}};
  const auto a = stage_accuracy(preds, golds);
  EXPECT_DOUBLE_EQ(a.total, 60.0);
  EXPECT_NEAR(a.one_op, 200.0 / 3.0, 1e-9);
  EXPECT_DOUBLE_EQ(a.n_op, 50.0);
}

TEST(StageAccuracy, EmptyBucketReadsFullMarks) {
  const auto a = stage_accuracy(Stages{{"sort"}}, Stages{{"head"}});
  EXPECT_DOUBLE_EQ(a.one_op, 0.0);
  EXPECT_DOUBLE_EQ(a.n_op, 100.0);
  EXPECT_EQ(a.n_op_count, 0);
}

TEST(StageAccuracy, LengthMismatchThrows) {
  EXPECT_THROW(stage_accuracy(Stages{{"sort"}}, Stages{}), Error);
  EXPECT_THROW(stage_accuracy(Stages{}, Stages{{"sort"}}), Error);
}

TEST(StageAccuracy, SelfComparisonIsPerfect) {
  std::mt19937 rng(7);
  const std::vector<std::string> pool{"sort", "head", "tail", "filter", "join", "copy"};
  for (int trial = 0; trial < 200; ++trial) {
    Stages golds(1 + rng() % 12);
    for (auto& g : golds) {
      g.resize(1 + rng() % 4);
      for (auto& s : g) s = pool[rng() % pool.size()];
    }
    const auto a = stage_accuracy(golds, golds);
    EXPECT_DOUBLE_EQ(a.total, 100.0);
    EXPECT_DOUBLE_EQ(a.one_op, 100.0);
    EXPECT_DOUBLE_EQ(a.n_op, 100.0);
  }
}

TEST(Measures, Parse) {
  EXPECT_EQ(parse_measures("stages,edges"), (std::set<Measure>{Measure::Stages, Measure::Edges}));
  EXPECT_EQ(parse_measures("props"), (std::set<Measure>{Measure::Props}));
  EXPECT_THROW(parse_measures("stages,bogus"), Error);
}

TEST(RunEval, GoldMocksScoreFullMarks) {
  const auto report = run_eval(testutil::eval20(), testutil::eval20_resources(), stages_only());
  EXPECT_EQ(report.records, 20);
  ASSERT_EQ(report.strategies.size(), 2u);
  for (const auto& s : report.strategies) {
    SCOPED_TRACE(std::string(to_string(s.strategy)));
    EXPECT_DOUBLE_EQ(s.accuracy.total, 100.0);
    EXPECT_DOUBLE_EQ(s.accuracy.one_op, 100.0);
    EXPECT_DOUBLE_EQ(s.accuracy.n_op, 100.0);
    EXPECT_EQ(s.predictions.size(), 20u);
  }
  EXPECT_TRUE(report.failures.empty());
}

TEST(RunEval, OneScriptedUnderPredictionGivesNinetyFive) {
  const auto report = run_eval(testutil::eval20(), testutil::eval20_resources("eval20_one_error.json"),
                               stages_only({Strategy::Cag}));
  ASSERT_EQ(report.strategies.size(), 1u);
  const auto& a = report.strategies[0].accuracy;
  // 19 of 20; the miss is a two-stage record, so 10 of 11 in that bucket.
  EXPECT_EQ(a.correct, 19);
  EXPECT_DOUBLE_EQ(a.total, 95.0);
  EXPECT_DOUBLE_EQ(a.one_op, 100.0);
  EXPECT_NEAR(a.n_op, 1000.0 / 11.0, 1e-9);
  const auto& records = testutil::eval20();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id == "join-merge-modify") {
      EXPECT_EQ(report.strategies[0].predictions[i], std::vector<std::string>{"join_merge"});
    }
  }
}

TEST(RunEval, CagStagePromptsAreSmaller) {
  const auto report = run_eval(testutil::eval20(), testutil::eval20_resources(), stages_only());
  const auto& cag = report.strategies[0];
  const auto& single = report.strategies[1];
  ASSERT_EQ(cag.strategy, Strategy::Cag);
  ASSERT_EQ(single.strategy, Strategy::Single);
  EXPECT_EQ(single.tokens.stage_requests, 20);
  EXPECT_GT(cag.tokens.stage_requests, 0);
  EXPECT_LT(cag.tokens.mean_stage_prompt_tokens, single.tokens.mean_stage_prompt_tokens);
  EXPECT_GE(cag.tokens.requests, cag.tokens.stage_requests);
}

TEST(RunEval, EdgesAndPropertiesOnGoldMocks) {
  EvalOptions o;
  o.measures = {Measure::Edges, Measure::Props};
  o.strategies = {Strategy::Cag};
  const auto report = run_eval(testutil::eval20(), testutil::eval20_resources(), o);
  EXPECT_TRUE(report.strategies.empty());
  ASSERT_TRUE(report.edges);
  EXPECT_EQ(report.edges->flows, 11);
  EXPECT_DOUBLE_EQ(report.edges->mean_similarity, 1.0);
  EXPECT_DOUBLE_EQ(report.edges->exact_rate, 100.0);
  ASSERT_TRUE(report.props);
  EXPECT_EQ(report.props->flows, 20);
  EXPECT_EQ(report.props->counts.matched, report.props->counts.gold);
  EXPECT_EQ(report.props->counts.matched, report.props->counts.predicted);
  EXPECT_DOUBLE_EQ(report.props->metrics.f1, 1.0);
}

TEST(RunEval, PropertyMetricsArePooledAcrossFlows) {
  // Flow A predicts one wrong value (0 of 1); flow B predicts one of two gold
  // items. Pooled: 1 matched, 2 predicted, 3 gold. Averaging per flow would
  // give recall 0.25 instead of 1/3.
  const auto text = R"([
    {"id": "a", "utterance": "Sort the customer records by last name", "gold_stages": ["sort"],
     "gold_properties": {"sort": [{"name": "Sort key", "value": "first name"}]}},
    {"id": "b", "utterance": "Give me the last 3 rows of my input dataset", "gold_stages": ["tail"],
     "gold_properties": {"tail": [{"name": "Rows", "value": "3"}, {"name": "Extra", "value": "x"}]}}
  ])";
  const auto records = parse_dataset(text, "inline");
  EvalOptions o;
  o.measures = {Measure::Props};
  o.strategies = {Strategy::Cag};
  const auto report = run_eval(records, testutil::eval20_resources(), o);
  ASSERT_TRUE(report.props);
  EXPECT_EQ(report.props->counts.matched, 1);
  EXPECT_EQ(report.props->counts.predicted, 2);
  EXPECT_EQ(report.props->counts.gold, 3);
  EXPECT_DOUBLE_EQ(report.props->metrics.precision, 0.5);
  EXPECT_NEAR(report.props->metrics.recall, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(report.props->metrics.f1, 0.4, 1e-12);
}

TEST(RunEval, FailuresAreRecordedAndRunContinues) {
  const auto text = R"([
    {"id": "known", "utterance": "Use Tail", "gold_stages": ["tail"]},
    {"id": "unscripted", "utterance": "something nobody scripted", "gold_stages": ["sort"]}
  ])";
  const auto records = parse_dataset(text, "inline");
  const auto report = run_eval(records, testutil::eval20_resources(), stages_only({Strategy::Cag}));
  EXPECT_EQ(report.strategies[0].accuracy.correct, 1);
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].record, "unscripted");
  EXPECT_EQ(report.failures[0].strategy, "cag");
}

TEST(Report, JsonAndTableAreByteStable) {
  EvalOptions o;
  o.measures = {Measure::Stages, Measure::Edges, Measure::Props};
  const auto a = run_eval(testutil::eval20(), testutil::eval20_resources(), o);
  const auto b = run_eval(testutil::eval20(), testutil::eval20_resources(), o);
  EXPECT_EQ(emit_report(a), emit_report(b));
  EXPECT_EQ(format_report_table(a), format_report_table(b));
  const auto doc = nlohmann::json::parse(emit_report(a));
  EXPECT_EQ(doc["records"], 20);
  EXPECT_EQ(doc["stages"].size(), 2u);
  EXPECT_EQ(doc["stages"][0]["strategy"], "cag");
  EXPECT_TRUE(doc.contains("edges"));
  EXPECT_TRUE(doc.contains("properties"));
  const auto table = format_report_table(a);
  EXPECT_NE(table.find("Stage accuracy"), std::string::npos);
  EXPECT_NE(table.find("Edges over 11 flows"), std::string::npos);
  EXPECT_NE(table.find("Properties over 20 flows"), std::string::npos);
}
