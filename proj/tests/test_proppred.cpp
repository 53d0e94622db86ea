#include <gtest/gtest.h>

#include <random>

#include "nl2flow/error.hpp"
#include "nl2flow/proppred.hpp"
#include "test_util.hpp"

using namespace nl2flow;

namespace {

const ValueType kRounding{ValueKind::Enum, {"Ceiling", "Floor", "Nearest"}};

PropertyAssignment raw(std::string name, std::string value) {
  PropertyAssignment a;
  a.name = std::move(name);
  a.raw_value = std::move(value);
  return a;
}

const StageDef& stage(const std::string& name) { return *testutil::catalog142().find(name); }
const ExternalRegistry& registry() { return testutil::eval20_resources().registry; }

std::vector<PropertyStatus> statuses(const std::vector<PropertyAssignment>& v) {
  std::vector<PropertyStatus> out;
  for (const auto& a : v) out.push_back(a.status);
  return out;
}

PropertyDef prop(std::string name, ValueKind kind, std::optional<std::string> availability = std::nullopt) {
  PropertyDef p;
  p.name = std::move(name);
  p.type.kind = kind;
  p.availability = std::move(availability);
  return p;
}

NodeInstance node_for(const std::string& stage_name, const std::string& sub) {
  NodeInstance n;
  n.unique_name = stage_name;
  n.stage = stage_name;
  n.sub_utterance = sub;
  return n;
}

}  // namespace

// --- coercion ---------------------------------------------------------------------

TEST(Coerce, Examples) {
  EXPECT_EQ(coerce("50", {ValueKind::Integer, {}}), Value{std::int64_t{50}});
  EXPECT_EQ(coerce("ceiling", kRounding), Value{std::string("Ceiling")});
  EXPECT_EQ(coerce("maybe", {ValueKind::Boolean, {}}), std::nullopt);
}

TEST(Coerce, Rules) {
  const ValueType integer{ValueKind::Integer, {}}, decimal{ValueKind::Decimal, {}}, boolean{ValueKind::Boolean, {}},
      text{ValueKind::String, {}};
  EXPECT_EQ(coerce(" -7 ", integer), Value{std::int64_t{-7}});
  EXPECT_EQ(coerce("\"12\"", integer), Value{std::int64_t{12}});
  EXPECT_EQ(coerce("fifty", integer), std::nullopt);
  EXPECT_EQ(coerce("1.5", integer), std::nullopt);
  EXPECT_EQ(coerce("1.5", decimal), Value{1.5});
  EXPECT_EQ(coerce("3", decimal), Value{3.0});
  EXPECT_EQ(coerce("1e3", decimal), std::nullopt);
  for (const char* t : {"true", "YES", "On"}) EXPECT_EQ(coerce(t, boolean), Value{true}) << t;
  for (const char* f : {"false", "no", "OFF"}) EXPECT_EQ(coerce(f, boolean), Value{false}) << f;
  EXPECT_EQ(coerce("'teradata-00'", text), Value{std::string("teradata-00")});
  EXPECT_EQ(coerce("round", kRounding), std::nullopt);
}

TEST(Coerce, CanonicalFormIsAFixpoint) {
  const std::vector<ValueType> types = {{ValueKind::Integer, {}}, {ValueKind::Decimal, {}}, {ValueKind::Boolean, {}},
                                        {ValueKind::String, {}}, kRounding};
  const std::vector<std::string> inputs = {"0",   "-12",  "+4",      "0.125", "10.50", "2.",    "yes", "OFF",
                                           "abc", "FLOOR", " nearest", "\"x\"", "007",  "-0.25", "",    "1,000"};
  for (const auto& t : types) {
    for (const auto& in : inputs) {
      const auto v = coerce(in, t);
      EXPECT_EQ(coerce(in, t), v);  // deterministic
      if (v) {
        EXPECT_EQ(coerce(format_value(*v), t), v) << in << " as " << to_string(t);
      }
    }
  }
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> real(-1e6, 1e6);
  for (int i = 0; i < 500; ++i) {
    const auto v = coerce(format_value(Value{real(rng)}), {ValueKind::Decimal, {}});
    ASSERT_TRUE(v);
    EXPECT_EQ(coerce(format_value(*v), {ValueKind::Decimal, {}}), v);
  }
}

TEST(Canonical, ScoringText) {
  const auto& cg = stage("column_generator");
  EXPECT_EQ(canonical_value("TRUE", cg.find_property("Generate Unicode Columns")), "true");
  EXPECT_EQ(canonical_value(" 050 ", cg.find_property("Row limit")), "50");
  EXPECT_EQ(canonical_value("Explicit", cg.find_property("Options/Column Method")), "explicit");
  EXPECT_EQ(canonical_value("  Raw Text ", nullptr), "Raw Text");
}

// --- validation ---------------------------------------------------------------------

TEST(Validate, ColumnToGenerateNeedsExplicitMethod) {
  const auto both = validate_properties({raw("Options/Column to Generate", "ID"), raw("Options/Column Method", "Explicit")},
                                        stage("column_generator"), registry());
  EXPECT_EQ(statuses(both), (std::vector<PropertyStatus>{PropertyStatus::Accepted, PropertyStatus::Accepted}));

  const auto alone =
      validate_properties({raw("Options/Column to Generate", "ID")}, stage("column_generator"), registry());
  EXPECT_EQ(alone[0].status, PropertyStatus::RejectedDependency);
}

TEST(Validate, TypeFailure) {
  const auto v = validate_properties({raw("Row limit", "fifty")}, stage("column_generator"), registry());
  EXPECT_EQ(v[0].status, PropertyStatus::RejectedType);
  EXPECT_FALSE(v[0].value);
}

TEST(Validate, EachRejectionStep) {
  const auto v = validate_properties({raw("Colour", "red"), raw("Row limit", "many"),
                                      raw("Options/Column to Generate", "ID"), raw("Connection name", "nope"),
                                      raw("Connection name", "teradata-00"), raw("table name", "EMPLOYEE2")},
                                     stage("teradata"), registry());
  EXPECT_EQ(statuses(v), (std::vector<PropertyStatus>{PropertyStatus::RejectedUnknownName, PropertyStatus::RejectedType,
                                                      PropertyStatus::RejectedUnknownName,
                                                      PropertyStatus::RejectedExternal,
                                                      PropertyStatus::RejectedUnknownName, PropertyStatus::Accepted}));
  EXPECT_EQ(v[5].name, "Table name");
  for (const auto& a : v) {
    if (a.status != PropertyStatus::Accepted) {
      EXPECT_FALSE(a.reason.empty());
    }
  }
}

TEST(Validate, DependenciesSeeOnlySurvivors) {
  // 'All rows' fails its type check, so it cannot block Skip.
  const auto v = validate_properties({raw("All rows", "maybe"), raw("Skip", "3")}, stage("head"), registry());
  EXPECT_EQ(statuses(v), (std::vector<PropertyStatus>{PropertyStatus::RejectedType, PropertyStatus::Accepted}));
  const auto blocked = validate_properties({raw("All rows", "true"), raw("Skip", "3")}, stage("head"), registry());
  EXPECT_EQ(blocked[1].status, PropertyStatus::RejectedDependency);
}

TEST(Validate, FixpointCascades) {
  StageDef s = testutil::stage("s", 0, 1, 0, 1);
  s.properties = {prop("X", ValueKind::String), prop("A", ValueKind::String, "defined('X')"),
                  prop("B", ValueKind::String, "defined('A')")};
  const std::vector<PropertyAssignment> in = {raw("A", "1"), raw("B", "2")};
  EXPECT_EQ(statuses(validate_properties(in, s, {})),
            (std::vector<PropertyStatus>{PropertyStatus::RejectedDependency, PropertyStatus::Accepted}));
  EXPECT_EQ(statuses(validate_properties(in, s, {}, {.dependency_fixpoint = true})),
            (std::vector<PropertyStatus>{PropertyStatus::RejectedDependency, PropertyStatus::RejectedDependency}));
}

TEST(Validate, CatalogTypeBugSurfaces) {
  StageDef s = testutil::stage("s", 0, 1, 0, 1);
  s.properties = {prop("N", ValueKind::Integer), prop("P", ValueKind::String, "'N' = \"x\"")};
  EXPECT_THROW(validate_properties({raw("N", "5"), raw("P", "v")}, s, {}), ConditionTypeError);
}

TEST(Validate, RandomAssignmentsHoldPerItemInvariants) {
  const std::vector<std::string> stages = {"column_generator", "head", "teradata", "decode", "sample"};
  const std::vector<std::string> values = {"50",   "fifty", "true", "maybe",      "Explicit",   "schema file",
                                           "ID",   "0.5",   "-3",   "teradata-00", "TM_DS_DB_1", "EMPLOYEE2",
                                           "Ceiling", "percent", "", "public"};
  std::mt19937 rng(12);
  for (int round = 0; round < 300; ++round) {
    const auto& s = stage(stages[rng() % stages.size()]);
    std::vector<PropertyAssignment> in;
    for (int k = 1 + rng() % 6; k > 0; --k) {
      std::string name = rng() % 6 == 0 ? "Bogus" : s.properties[rng() % s.properties.size()].name;
      in.push_back(raw(name, values[rng() % values.size()]));
    }
    const auto out = validate_properties(in, s, registry());
    ASSERT_EQ(out.size(), in.size());
    PropertyEnv env;
    for (const auto& a : out) {
      EXPECT_NE(a.status, PropertyStatus::Pending);
      if (a.status == PropertyStatus::Accepted) env.emplace(a.name, *a.value);
    }
    for (const auto& a : out) {
      if (a.status != PropertyStatus::Accepted) continue;
      const auto* def = s.find_property(a.name);
      ASSERT_NE(def, nullptr);
      EXPECT_EQ(coerce(a.raw_value, def->type), a.value);
      if (def->availability) {
        EXPECT_TRUE(eval_condition(parse_condition(*def->availability), env)) << a.name;
      }
      if (const auto* kind = registry().kind_for(s.name, a.name)) {
        EXPECT_TRUE(registry().known(*kind, format_value(*a.value)));
      }
    }
    // Accepted subset is stable under revalidation.
    const auto accepted = accepted_only(out);
    EXPECT_EQ(validate_properties(accepted, s, registry(), {.dependency_fixpoint = true}), accepted) << round;
  }
}

TEST(Registry, ParsesAndRejectsUnknownKinds) {
  const auto r = ExternalRegistry::parse(R"({"kinds": {"table": ["t1"]}, "bindings": {"db2": {"Table name": "table"}}})",
                                         "r.json");
  ASSERT_NE(r.kind_for("db2", "Table name"), nullptr);
  EXPECT_TRUE(r.known("table", "t1"));
  EXPECT_FALSE(r.known("table", "t2"));
  EXPECT_EQ(r.kind_for("db2", "Schema name"), nullptr);
  EXPECT_THROW(ExternalRegistry::parse(R"({"kinds": {}, "bindings": {"db2": {"Table name": "table"}}})", "r.json"),
               ValidationError);
}

// --- metrics ------------------------------------------------------------------------

TEST(PropMetrics, HalfOverlap) {
  const std::vector<ScoredProperty> pred = {{"n", "a", "1"}, {"n", "b", "2"}};
  const std::vector<ScoredProperty> gold = {{"n", "a", "1"}, {"n", "c", "3"}};
  const auto m = prop_metrics(pred, gold);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);
}

TEST(PropMetrics, IdentityAndVacuous) {
  const std::vector<ScoredProperty> gold = {{"n", "a", "1"}, {"m", "a", "1"}};
  const auto same = prop_metrics(gold, gold);
  EXPECT_DOUBLE_EQ(same.f1, 1.0);
  const auto empty = prop_metrics({}, {});
  EXPECT_DOUBLE_EQ(empty.precision, 1.0);
  EXPECT_DOUBLE_EQ(empty.recall, 1.0);
  EXPECT_DOUBLE_EQ(empty.f1, 1.0);
  const auto none_predicted = prop_metrics({}, gold);
  EXPECT_DOUBLE_EQ(none_predicted.precision, 0.0);
  EXPECT_DOUBLE_EQ(none_predicted.recall, 0.0);
}

TEST(PropMetrics, NodeAndValueMustMatch) {
  const std::vector<ScoredProperty> gold = {{"n", "a", "1"}};
  EXPECT_EQ(prop_counts(std::vector<ScoredProperty>{{"m", "a", "1"}}, gold).matched, 0);
  EXPECT_EQ(prop_counts(std::vector<ScoredProperty>{{"n", "a", "2"}}, gold).matched, 0);
  EXPECT_EQ(prop_counts(std::vector<ScoredProperty>{{"n", "a", "1"}, {"n", "a", "1"}}, gold).matched, 1);
}

TEST(PropMetrics, MicroAveragingPoolsItems) {
  const std::vector<ScoredProperty> p1 = {{"x", "a", "1"}}, g1 = p1;
  const std::vector<ScoredProperty> p2 = {{"y", "a", "1"}, {"y", "b", "1"}, {"y", "c", "1"}};
  const std::vector<ScoredProperty> g2 = {{"y", "a", "2"}, {"y", "b", "2"}, {"y", "c", "2"}};
  auto pooled = prop_counts(p1, g1);
  pooled += prop_counts(p2, g2);
  const auto m = metrics_from_counts(pooled);
  // 1 match over 4 items each way, not the 0.5 a per-flow mean would give.
  EXPECT_DOUBLE_EQ(m.precision, 0.25);
  EXPECT_DOUBLE_EQ(m.recall, 0.25);
}

// --- prediction ---------------------------------------------------------------------

TEST(Predict, TeradataConnectionTriple) {
  const std::string sub = "connection name is teradata-00, schema name is TM_DS_DB_1 and table name is EMPLOYEE2";
  MockProvider mock({testutil::suffix(testutil::props_tail("teradata", sub),
                                      "Connection name = teradata-00\nSchema name = TM_DS_DB_1\nTable name = EMPLOYEE2")});
  RunLog log;
  const auto got = predict_properties(node_for("teradata", sub), stage("teradata"), mock, testutil::templates(), {}, log);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[1].name, "Schema name");
  EXPECT_EQ(got[1].raw_value, "TM_DS_DB_1");
  for (const auto& a : got) EXPECT_EQ(a.status, PropertyStatus::Pending);
  EXPECT_EQ(accepted_only(validate_properties(got, stage("teradata"), registry())).size(), 3u);
}

TEST(Predict, RowLimit) {
  const std::string sub = "Row limit should be 50";
  MockProvider mock({testutil::suffix(testutil::props_tail("column_generator", sub), "Row limit = 50")});
  RunLog log;
  const auto got =
      predict_properties(node_for("column_generator", sub), stage("column_generator"), mock, testutil::templates(), {}, log);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].name, "Row limit");
  EXPECT_EQ(got[0].raw_value, "50");
}

TEST(Predict, NothingToSayIsEmpty) {
  MockProvider mock({testutil::contains({"Properties:"}, "None.")});
  RunLog log;
  EXPECT_TRUE(predict_properties(node_for("sort", "sort it"), stage("sort"), mock, testutil::templates(), {}, log).empty());
  EXPECT_THROW(predict_properties(node_for("sort", " "), stage("sort"), mock, testutil::templates(), {}, log), Error);
}

TEST(Predict, AnswerParsing) {
  const auto a = parse_property_answer("- \"Row limit\" = 50\nnoise\n = 3\nSort key = a = b\n");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].name, "Row limit");
  EXPECT_EQ(a[1].raw_value, "a = b");
}
