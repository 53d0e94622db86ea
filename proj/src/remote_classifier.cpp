#include <httplib.h>

#include <fmt/format.h>

#include "http_util.hpp"
#include "nl2flow/classify.hpp"
#include "nl2flow/error.hpp"

namespace nl2flow {

RemoteClassifier::RemoteClassifier(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {
  detail::split_url(base_url_);  // validates early
}

RemoteClassifier::~RemoteClassifier() = default;

Classification RemoteClassifier::classify(std::string_view text) const {
  const auto url = detail::split_url(base_url_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  const nlohmann::json body = {{"text", std::string(text)}};
  auto res = client.Post(url.path_prefix + "/classify", body.dump(), "application/json");
  if (!res) {
    throw LlmError(LlmError::Kind::Transport,
                   fmt::format("classifier request to {} failed: {}", base_url_, httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw LlmError(LlmError::Kind::Provider,
                   fmt::format("classifier at {} returned HTTP {}", base_url_, res->status));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    throw LlmError(LlmError::Kind::Provider, "classifier returned a malformed JSON body");
  }
  return classification_from_json(doc);
}

}  // namespace nl2flow
