#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "nl2flow/error.hpp"
#include "nl2flow/llm.hpp"
#include "nl2flow/stagepred.hpp"
#include "test_util.hpp"

using namespace nl2flow;

namespace {

const std::string kFullName =
    "Split the full_name field of the employee_data dataset into separate columns for first_name and "
    "last_name, then capitalize the first letter of each name for consistency.";

std::string without_trailing_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

RenderedPrompt listing_prompt(ModelFamily family) {
  const auto& cat = testutil::catalog8();
  std::vector<const StageDef*> ctx;
  for (const auto& s : cat.stages()) ctx.push_back(&s);
  const auto bank = load_fewshot_bank(testutil::data_dir() / "fewshot" / "listing_bank.json");
  return render_stage_prompt(testutil::templates(family), ctx, bank, kFullName);
}

// Minimal completion endpoint whose replies are scripted per test.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::string last_body;

  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&, int)> handler) {
    server.Post("/v1/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      handler(req, res, hits++);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  HttpProviderConfig config() const {
    HttpProviderConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/completions";
    c.model = "stub";
    c.max_retries = 1;
    c.timeout = std::chrono::seconds(5);
    return c;
  }
};

}  // namespace

TEST(Template, ParsesPlaceholdersInOrder) {
  const auto t = PromptTemplate::parse(ModelFamily::Granite, "A {{x}} B {{y}}");
  EXPECT_EQ(t.placeholders(), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(render_prompt(t, {{"x", "1"}, {"y", "{{z}}"}}).text, "A 1 B {{z}}");
}

TEST(Template, RejectsMalformedPlaceholders) {
  EXPECT_THROW(PromptTemplate::parse(ModelFamily::Granite, "A {{x"), ParseError);
  EXPECT_THROW(PromptTemplate::parse(ModelFamily::Granite, "{{x}} and {{x}}"), ParseError);
  EXPECT_THROW(PromptTemplate::parse(ModelFamily::Granite, "{{}}"), ParseError);
}

TEST(Template, MissingBindingIsNamed) {
  const auto& t = testutil::templates().get("stage");
  try {
    render_prompt(t, {{"context", ""}, {"examples", ""}});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("utterance"), std::string::npos) << e.what();
  }
}

TEST(Template, UnknownTaskAndFamily) {
  EXPECT_THROW(testutil::templates().get("nope"), Error);
  EXPECT_THROW(parse_family("gpt"), Error);
  EXPECT_EQ(parse_family("llama"), ModelFamily::Llama);
}

TEST(Render, GraniteListingIsByteExact) {
  const auto p = listing_prompt(ModelFamily::Granite);
  EXPECT_EQ(p.text, without_trailing_newline(testutil::slurp(testutil::fixture("listing_granite.txt"))));
  EXPECT_EQ(p.text.rfind("<|start_of_role|>system<|end_of_role|>", 0), 0u);
  EXPECT_TRUE(p.text.ends_with("<|start_of_role|>assistant<|end_of_role|>"));
}

TEST(Render, LlamaListingIsByteExact) {
  const auto p = listing_prompt(ModelFamily::Llama);
  EXPECT_EQ(p.text, without_trailing_newline(testutil::slurp(testutil::fixture("listing_llama.txt"))));
  EXPECT_TRUE(p.text.ends_with("Operators: \""));
  EXPECT_EQ(p.text.find("<|start_of_role|>"), std::string::npos);
}

TEST(Render, IsDeterministic) {
  EXPECT_EQ(listing_prompt(ModelFamily::Granite).text, listing_prompt(ModelFamily::Granite).text);
}

TEST(Tokens, SimpleCounts) {
  EXPECT_EQ(count_tokens(""), 0);
  EXPECT_EQ(count_tokens("sort on age"), 3);
  EXPECT_EQ(count_tokens("\"head, tail\""), 5);
  EXPECT_EQ(count_tokens("teradata-00"), 3);
}

TEST(Tokens, ListingCountsArePinned) {
  // Regression constants taken from the shipped listing fixtures.
  const auto g = listing_prompt(ModelFamily::Granite);
  EXPECT_EQ(g.token_estimate, count_tokens(g.text));
  EXPECT_EQ(g.token_estimate, 1837);
  EXPECT_EQ(listing_prompt(ModelFamily::Llama).token_estimate, 1731);
}

TEST(Mock, FirstMatchingScriptAnswers) {
  MockProvider mock({testutil::contains({"Split the full_name"}, "split_subrecord, modify\""),
                     testutil::contains({"Split"}, "never")});
  const auto r = mock.complete(listing_prompt(ModelFamily::Granite), {});
  EXPECT_EQ(r.text, "split_subrecord, modify\"");
  EXPECT_EQ(r.completion_tokens, count_tokens(r.text));
  EXPECT_EQ(mock.call_count(), 1u);
}

TEST(Mock, MatcherKinds) {
  ScriptMatcher exact{ScriptMatcher::Kind::Exact, {"abc"}};
  EXPECT_TRUE(exact.matches("abc"));
  EXPECT_FALSE(exact.matches("abcd"));
  ScriptMatcher all{ScriptMatcher::Kind::Contains, {"a", "c"}};
  EXPECT_TRUE(all.matches("xaxcx"));
  EXPECT_FALSE(all.matches("xax"));
  ScriptMatcher tail{ScriptMatcher::Kind::Suffix, {"end"}};
  EXPECT_TRUE(tail.matches("the end"));
  EXPECT_FALSE(tail.matches("end of it"));
}

TEST(Mock, NoMatchListsTriedMatchers) {
  MockProvider mock({testutil::contains({"alpha"}, "x"), testutil::suffix("omega", "y")});
  try {
    mock.complete({"nothing here", 2}, {});
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind(), LlmError::Kind::NoScriptMatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
    EXPECT_NE(msg.find("omega"), std::string::npos) << msg;
  }
}

TEST(Mock, ScriptFileParsing) {
  const auto scripts = MockProvider::parse_scripts(R"([
    {"match": {"contains": ["a", "b"]}, "response": "r1", "prompt_tokens": 7},
    {"match": {"exact": "x"}, "response": "r2"},
    {"match": {"suffix": "z"}, "response": "r3", "completion_tokens": 1}])",
                                                   "mock.json");
  ASSERT_EQ(scripts.size(), 3u);
  EXPECT_EQ(scripts[0].match.patterns, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(scripts[0].prompt_tokens, 7);
  EXPECT_EQ(scripts[1].match.kind, ScriptMatcher::Kind::Exact);
  EXPECT_EQ(scripts[2].match.kind, ScriptMatcher::Kind::Suffix);
  EXPECT_THROW(MockProvider::parse_scripts(R"([{"match": {"regex": "."}, "response": ""}])", "m"), ParseError);
  EXPECT_THROW(MockProvider::parse_scripts("{}", "m"), ParseError);

  MockProvider mock(scripts);
  EXPECT_EQ(mock.complete({"ab", 1}, {}).prompt_tokens, 7);
}

TEST(Mock, ConcurrentCallsAreDeterministic) {
  MockProvider mock({testutil::contains({"a"}, "A"), testutil::contains({"b"}, "B")});
  std::vector<std::thread> threads;
  std::atomic<int> wrong{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 200; ++i) {
        const bool a = (i + t) % 2 == 0;
        if (mock.complete({a ? "a" : "b", 1}, {}).text != (a ? "A" : "B")) ++wrong;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(wrong, 0);
  EXPECT_EQ(mock.call_count(), 1600u);
}

TEST(OperatorList, Examples) {
  EXPECT_EQ(to_multiset(parse_operator_list("\"head, tail, head\"")), (Multiset{{"head", 2}, {"tail", 1}}));
  EXPECT_EQ(parse_operator_list("dataset\""), (std::vector<std::string>{"dataset"}));
  EXPECT_EQ(parse_operator_list("\"join_merge\""), (std::vector<std::string>{"join_merge"}));
  EXPECT_EQ(parse_operator_list(" Sort ,  FILTER\nextra text"), (std::vector<std::string>{"sort", "filter"}));
}

TEST(OperatorList, UnparseableAnswers) {
  for (const char* bad : {"", "\"\"", " , ", "\"...\""}) {
    try {
      parse_operator_list(bad);
      FAIL() << bad;
    } catch (const LlmError& e) {
      EXPECT_EQ(e.kind(), LlmError::Kind::Unparseable);
    }
  }
}

TEST(OperatorList, RoundTripsGoldMultisets) {
  const std::vector<std::vector<std::string>> golds = {
      {"teradata", "sort", "filter", "decode", "column_generator", "postgresql"},
      {"fileset", "fileset", "join_merge"},
      {"tail"}};
  for (const auto& g : golds) {
    EXPECT_EQ(parse_operator_list(format_operator_list(g)), g);
    EXPECT_EQ(parse_operator_list("\"" + format_operator_list(g) + "\""), g);
  }
}

TEST(Http, MirrorsPayloadAndUsage) {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(R"({"choices": [{"text": "head, tail"}], "usage": {"prompt_tokens": 41, "completion_tokens": 3}})",
                    "application/json");
  });
  HttpProvider http(stub.config());
  CompletionParams params;
  params.stop = {"\n"};
  const auto r = http.complete({"prompt text", 2}, params);
  EXPECT_EQ(r.text, "head, tail");
  EXPECT_EQ(r.prompt_tokens, 41);
  EXPECT_EQ(r.completion_tokens, 3);
  const auto sent = nlohmann::json::parse(stub.last_body);
  EXPECT_EQ(sent["prompt"], "prompt text");
  EXPECT_EQ(sent["model"], "stub");
  EXPECT_EQ(sent["temperature"], 0.0);
  EXPECT_EQ(sent["stop"], nlohmann::json::array({"\n"}));
}

TEST(Http, ChatShapeAndEstimatedUsage) {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "sort"}}]})", "application/json");
  });
  auto cfg = stub.config();
  cfg.raw_prompt = false;
  HttpProvider http(cfg);
  const auto r = http.complete({"sort on age", 3}, {});
  EXPECT_EQ(r.text, "sort");
  EXPECT_EQ(r.prompt_tokens, 3);
  EXPECT_EQ(r.completion_tokens, 1);
  EXPECT_EQ(nlohmann::json::parse(stub.last_body)["messages"][0]["content"], "sort on age");
}

TEST(Http, RetriesServerErrors) {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int n) {
    if (n == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"text": "ok"})", "application/json");
  });
  HttpProvider http(stub.config());
  EXPECT_EQ(http.complete({"x", 1}, {}).text, "ok");
  EXPECT_EQ(stub.hits, 2);
}

TEST(Http, ErrorPayloadIsProviderError) {
  StubServer stub([](const httplib::Request&, httplib::Response& res, int) {
    res.status = 400;
    res.set_content(R"({"error": {"message": "context too long"}})", "application/json");
  });
  HttpProvider http(stub.config());
  try {
    http.complete({"x", 1}, {});
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind(), LlmError::Kind::Provider);
    EXPECT_NE(std::string(e.what()).find("context too long"), std::string::npos);
  }
  EXPECT_EQ(stub.hits, 1);
}

TEST(Http, UnreachableEndpointIsTransportError) {
  HttpProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/completions";
  cfg.max_retries = 0;
  cfg.timeout = std::chrono::seconds(1);
  HttpProvider http(cfg);
  try {
    http.complete({"x", 1}, {});
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind(), LlmError::Kind::Transport);
  }
}
