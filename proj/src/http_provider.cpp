#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "nl2flow/error.hpp"
#include "nl2flow/llm.hpp"

namespace nl2flow {

struct HttpProvider::Gate {
  std::mutex mutex;
  std::condition_variable cv;
  int available = 0;

  void acquire() {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return available > 0; });
    --available;
  }
  void release() {
    {
      std::lock_guard lock(mutex);
      ++available;
    }
    cv.notify_one();
  }
};

std::optional<HttpProviderConfig> HttpProviderConfig::from_env() {
  const char* endpoint = std::getenv("LLM_ENDPOINT");
  if (endpoint == nullptr || *endpoint == '\0') return std::nullopt;
  HttpProviderConfig config;
  config.endpoint = endpoint;
  if (const char* key = std::getenv("LLM_API_KEY")) config.api_key = key;
  if (const char* model = std::getenv("LLM_MODEL")) config.model = model;
  return config;
}

HttpProvider::HttpProvider(HttpProviderConfig config)
    : config_(std::move(config)), gate_(std::make_unique<Gate>()) {
  detail::split_url(config_.endpoint);
  gate_->available = std::max(1, config_.max_in_flight);
}

HttpProvider::~HttpProvider() = default;

namespace {

CompletionResult parse_completion(const std::string& body, const RenderedPrompt& prompt) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw LlmError(LlmError::Kind::Provider, "completion endpoint returned a malformed JSON body");
  }
  if (doc.contains("error")) {
    const auto& e = doc["error"];
    std::string message = e.is_object() && e.contains("message") && e["message"].is_string()
                              ? e["message"].get<std::string>()
                              : e.dump();
    throw LlmError(LlmError::Kind::Provider, "completion endpoint error: " + message);
  }
  CompletionResult out;
  if (doc.contains("text") && doc["text"].is_string()) {
    out.text = doc["text"].get<std::string>();
  } else if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const auto& choice = doc["choices"][0];
    if (choice.contains("text") && choice["text"].is_string()) {
      out.text = choice["text"].get<std::string>();
    } else if (choice.contains("message") && choice["message"].contains("content") &&
               choice["message"]["content"].is_string()) {
      out.text = choice["message"]["content"].get<std::string>();
    } else {
      throw LlmError(LlmError::Kind::Provider, "completion choice carries no text");
    }
  } else {
    throw LlmError(LlmError::Kind::Provider, "completion response carries no text");
  }
  out.prompt_tokens = prompt.token_estimate;
  out.completion_tokens = count_tokens(out.text);
  if (doc.contains("usage") && doc["usage"].is_object()) {
    const auto& usage = doc["usage"];
    if (usage.contains("prompt_tokens") && usage["prompt_tokens"].is_number_integer()) {
      out.prompt_tokens = usage["prompt_tokens"].get<int>();
    }
    if (usage.contains("completion_tokens") && usage["completion_tokens"].is_number_integer()) {
      out.completion_tokens = usage["completion_tokens"].get<int>();
    }
  }
  return out;
}

}  // namespace

CompletionResult HttpProvider::complete(const RenderedPrompt& prompt, const CompletionParams& params) {
  const auto url = detail::split_url(config_.endpoint);
  nlohmann::json body = {{"temperature", params.temperature}, {"max_tokens", params.max_tokens}};
  if (!config_.model.empty()) body["model"] = config_.model;
  if (config_.raw_prompt) {
    body["prompt"] = prompt.text;
  } else {
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt.text}}});
  }
  if (!params.stop.empty()) body["stop"] = params.stop;
  const auto payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  gate_->acquire();
  struct Release {
    Gate* g;
    ~Release() { g->release(); }
  } release{gate_.get()};

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200 << attempt));
    httplib::Client client(url.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    auto res = client.Post(url.path_prefix.empty() ? "/" : url.path_prefix, headers, payload, "application/json");
    if (!res) {
      last_error = fmt::format("request to {} failed: {}", config_.endpoint, httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = fmt::format("{} returned HTTP {}", config_.endpoint, res->status);
      continue;
    }
    if (res->status != 200) {
      // Client errors are not retried; surface the body's error message if any.
      try {
        return parse_completion(res->body, prompt);
      } catch (const LlmError& e) {
        throw LlmError(LlmError::Kind::Provider,
                       fmt::format("{} returned HTTP {}: {}", config_.endpoint, res->status, e.what()));
      }
    }
    return parse_completion(res->body, prompt);
  }
  throw LlmError(LlmError::Kind::Transport,
                 fmt::format("{} (after {} attempts)", last_error, config_.max_retries + 1));
}

}  // namespace nl2flow
