#include <gtest/gtest.h>

#include <httplib.h>

#include <cmath>
#include <random>
#include <thread>

#include "nl2flow/classify.hpp"
#include "nl2flow/error.hpp"
#include "test_util.hpp"

using namespace nl2flow;

namespace {

const std::vector<TrainingPair> kTwoPairs = {{"sort on the age column", "sort"},
                                             {"give me the last 3 rows of my input dataset", "tail"}};

// Dense tf-idf cosine computed from scratch: idf = ln((1+n)/(1+df)) + 1,
// unseen query tokens weighted ln(1+n) + 1, label score = best exemplar.
std::map<std::string, double> brute_force_scores(const std::vector<TrainingPair>& pairs, const std::string& query) {
  const double n = static_cast<double>(pairs.size());
  std::vector<std::vector<std::string>> docs;
  std::map<std::string, int> df;
  for (const auto& p : pairs) {
    docs.push_back(tokenize(p.utterance));
    std::set<std::string> seen(docs.back().begin(), docs.back().end());
    for (const auto& t : seen) ++df[t];
  }
  auto weight = [&](const std::string& t) {
    auto it = df.find(t);
    return it == df.end() ? std::log(1.0 + n) + 1.0 : std::log((1.0 + n) / (1.0 + it->second)) + 1.0;
  };
  auto vec = [&](const std::vector<std::string>& toks) {
    std::map<std::string, double> v;
    for (const auto& t : toks) v[t] += weight(t);
    double norm = 0;
    for (auto& [_, w] : v) norm += w * w;
    for (auto& [_, w] : v) w /= std::sqrt(norm);
    return v;
  };
  const auto q = vec(tokenize(query));
  std::map<std::string, double> best;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto e = vec(docs[i]);
    double dot = 0;
    for (const auto& [t, w] : q) {
      auto it = e.find(t);
      if (it != e.end()) dot += w * it->second;
    }
    best[pairs[i].label] = std::max(best[pairs[i].label], dot);
  }
  return best;
}

}  // namespace

TEST(Classifier, TrainsOneExemplarPerPair) {
  const auto m = train(kTwoPairs);
  EXPECT_EQ(m.exemplars.size(), 2u);
  EXPECT_DOUBLE_EQ(m.threshold, 0.25);
  for (const auto& ex : m.exemplars) {
    double norm = 0;
    for (const auto& [_, w] : ex.vector) norm += w * w;
    EXPECT_NEAR(norm, 1.0, 1e-12);
  }
}

TEST(Classifier, DuplicatePairsBehaveIdentically) {
  auto doubled = kTwoPairs;
  doubled.push_back(kTwoPairs[0]);
  const auto m = train(std::vector<TrainingPair>{kTwoPairs[0], kTwoPairs[0]});
  EXPECT_EQ(m.exemplars.size(), 2u);
  EXPECT_EQ(m.exemplars[0].vector, m.exemplars[1].vector);
  EXPECT_EQ(classify(train(doubled), "sort on the age column").top(), "sort");
}

TEST(Classifier, RejectsUnknownLabelsAndEmptyTraining) {
  const std::vector<TrainingPair> bad = {{"whatever", "nonexistent"}};
  EXPECT_THROW(train(bad, &testutil::catalog8()), Error);
  EXPECT_THROW(train(std::vector<TrainingPair>{}), Error);
  EXPECT_THROW(train(kTwoPairs, nullptr, 1.5), Error);
}

TEST(Classifier, MemorizesTrainingUtterance) {
  const auto c = classify(train(kTwoPairs), "sort on the age column");
  ASSERT_TRUE(c.matched);
  EXPECT_EQ(c.top(), "sort");
  EXPECT_NEAR(c.ranked.front().score, 1.0, 1e-12);
}

TEST(Classifier, AgreesWithBruteForceCosine) {
  const auto m = train(kTwoPairs);
  const auto c = classify(m, "sort employees by age");
  const auto oracle = brute_force_scores(kTwoPairs, "sort employees by age");
  ASSERT_EQ(c.top(), "sort");
  EXPECT_GT(oracle.at("sort"), oracle.at("tail"));
  EXPECT_NEAR(c.ranked.front().score, oracle.at("sort"), 1e-12);
}

TEST(Classifier, RandomQueriesMatchBruteForce) {
  const auto pairs = load_training_pairs(testutil::data_dir() / "classifier" / "training.tsv");
  const auto m = train(pairs);
  std::vector<std::string> vocab;
  for (const auto& [tok, _] : m.idf) vocab.push_back(tok);
  vocab.push_back("zzunseen");
  std::mt19937 rng(11);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 6);
  for (int round = 0; round < 50; ++round) {
    std::string q;
    for (auto n = len(rng); n > 0; --n) q += vocab[pick(rng)] + " ";
    const auto oracle = brute_force_scores(pairs, q);
    const auto c = classify(m, q);
    for (const auto& s : c.ranked) EXPECT_NEAR(s.score, oracle.at(s.label), 1e-9) << q << " " << s.label;
    for (std::size_t i = 1; i < c.ranked.size(); ++i) EXPECT_GE(c.ranked[i - 1].score, c.ranked[i].score);
  }
}

TEST(Classifier, RowLimitProbeHasNoMatch) {
  const std::vector<TrainingPair> pairs = {{"sort on the age column", "sort"},
                                           {"filter out pizza column", "filter"}};
  EXPECT_FALSE(classify(train(pairs), "Row limit should be 50").matched);
}

TEST(Classifier, EmptyTextIsNoMatch) {
  const auto c = classify(train(kTwoPairs), "  ");
  EXPECT_FALSE(c.matched);
  EXPECT_TRUE(c.ranked.empty());
  EXPECT_EQ(c.top(), std::nullopt);
}

TEST(Classifier, TiesBreakByLabel) {
  const std::vector<TrainingPair> pairs = {{"alpha beta", "zeta"}, {"beta alpha", "eta"}};
  const auto c = classify(train(pairs), "alpha beta");
  ASSERT_EQ(c.ranked.size(), 2u);
  EXPECT_EQ(c.ranked[0].label, "eta");
  EXPECT_EQ(c.ranked[1].label, "zeta");
}

TEST(Classifier, TokenizerKeepsNumeralsAndSplitsIdentifiers) {
  EXPECT_EQ(tokenize("teradata-00, TM_DS_DB_1"),
            (std::vector<std::string>{"teradata", "00", "tm", "ds", "db", "1"}));
}

TEST(KeywordScan, FindsNamesAndSynonyms) {
  const auto& c = testutil::catalog142();
  EXPECT_EQ(keyword_scan(c, "then filter out pizza column"), (std::set<std::string>{"filter"}));
  EXPECT_EQ(keyword_scan(c, "extract records where sales exceed $1000"), (std::set<std::string>{"filter"}));
  EXPECT_TRUE(keyword_scan(c, "the filtered view").empty());
  EXPECT_EQ(keyword_scan(c, "load it into SQL   Server"), (std::set<std::string>{"sqlserver"}));
  EXPECT_EQ(keyword_scan(c, "use the split subrecord stage"), (std::set<std::string>{"split_subrecord"}));
  EXPECT_EQ(keyword_scan(c, "use split_vector"), (std::set<std::string>{"split_vector"}));
}

TEST(KeywordScan, CaseInvariantSubsetOfCatalog) {
  const auto& c = testutil::catalog142();
  for (const std::string text : {"Read from Teradata then SORT and Filter into postgres",
                                 "Extract data from MySQL and sample it using percent mode"}) {
    auto upper = text;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const auto hits = keyword_scan(c, text);
    EXPECT_EQ(hits, keyword_scan(c, upper));
    for (const auto& h : hits) EXPECT_TRUE(c.contains(h));
  }
}

TEST(TrainingPairs, ParsesTsvAndJson) {
  const auto tsv = parse_training_pairs("# comment\nsort\tsort on age\n\ntail\tlast rows\n", "t.tsv");
  EXPECT_EQ(tsv, (std::vector<TrainingPair>{{"sort on age", "sort"}, {"last rows", "tail"}}));
  const auto json = parse_training_pairs(R"([{"utterance": "sort on age", "label": "sort"}])", "t.json");
  EXPECT_EQ(json, (std::vector<TrainingPair>{{"sort on age", "sort"}}));
  EXPECT_THROW(parse_training_pairs("sort without tab\n", "t.tsv"), ParseError);
}

TEST(TrainingPairs, ShippedSetIsMemorized) {
  const auto pairs = load_training_pairs(testutil::data_dir() / "classifier" / "training.tsv");
  const auto m = train(pairs, &testutil::catalog142());
  for (const auto& p : pairs) {
    const auto c = classify(m, p.utterance);
    ASSERT_TRUE(c.matched) << p.utterance;
    EXPECT_EQ(c.ranked.front().label, p.label) << p.utterance;
  }
}

TEST(RemoteClassifier, SpeaksTheSameContract) {
  const auto model = train(kTwoPairs);
  httplib::Server server;
  server.Post("/classify", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    res.set_content(to_json(classify(model, body.at("text").get<std::string>())).dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteClassifier remote("http://127.0.0.1:" + std::to_string(port));
  for (const char* q : {"sort on the age column", "sort employees by age", "nothing in common"}) {
    EXPECT_EQ(remote.classify(q), classify(model, q)) << q;
  }
  server.stop();
  t.join();
}

TEST(RemoteClassifier, TransportFailureIsAnError) {
  RemoteClassifier remote("http://127.0.0.1:1", 1);
  EXPECT_THROW(remote.classify("x"), Error);
}
