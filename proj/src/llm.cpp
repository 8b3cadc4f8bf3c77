#include "plotcast/llm.hpp"

#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

namespace plotcast {

std::string build_prompt(std::string_view story) {
  std::string prompt = "Given the story snippet: ";
  prompt += story;
  prompt += " Describe a follow-up story arc within 30 words";
  return prompt;
}

Json llm_request_body(std::string_view prompt, const LlmParams& p) {
  return Json{{"model", p.model},
              {"prompt", std::string(prompt)},
              {"temperature", p.temperature},
              {"top_p", p.top_p},
              {"max_tokens", p.max_tokens},
              {"frequency_penalty", p.frequency_penalty},
              {"presence_penalty", p.presence_penalty},
              {"best_of", p.best_of}};
}

std::string to_string(LlmErrorKind kind) {
  switch (kind) {
    case LlmErrorKind::auth: return "auth";
    case LlmErrorKind::network: return "network";
    case LlmErrorKind::timeout: return "timeout";
    case LlmErrorKind::quota: return "quota";
    case LlmErrorKind::protocol: return "protocol";
  }
  return "?";
}

std::string MockTransport::complete(const Json& body) {
  last_body_ = body;
  ++calls_;
  if (!canned_.empty()) return canned_;
  return "A stranger arrives at the farm with news of the war, and the family must decide whether to flee the "
         "valley before winter or stay and defend the house they built together.";
}

HttpTransportConfig HttpTransportConfig::from_environment() {
  HttpTransportConfig c;
  if (const char* e = std::getenv("PLOTCAST_LLM_ENDPOINT"); e && *e) c.endpoint = e;
  if (const char* k = std::getenv("PLOTCAST_LLM_API_KEY"); k && *k)
    c.api_key = k;
  else if (const char* o = std::getenv("OPENAI_API_KEY"); o && *o)
    c.api_key = o;
  return c;
}

HttpTransport::HttpTransport(HttpTransportConfig config) : config_(std::move(config)) {}

std::string HttpTransport::complete(const Json& body) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url))
    throw LlmError(LlmErrorKind::protocol, "malformed LLM endpoint '" + config_.endpoint + "'");
  if (config_.api_key.empty()) throw LlmError(LlmErrorKind::auth, "no LLM API key in the environment");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (config_.endpoint.starts_with("https://"))
    throw LlmError(LlmErrorKind::network, "built without TLS support; cannot reach " + config_.endpoint);
#endif
  httplib::Client client(m[1].str());
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  const httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
      throw LlmError(LlmErrorKind::timeout, "LLM request timed out (" + httplib::to_string(err) + ")");
    throw LlmError(LlmErrorKind::network, "LLM request failed: " + httplib::to_string(err));
  }
  if (res->status == 401 || res->status == 403)
    throw LlmError(LlmErrorKind::auth, "LLM endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
  if (res->status == 429) throw LlmError(LlmErrorKind::quota, "LLM quota or rate limit exceeded (HTTP 429)");
  if (res->status >= 500) throw LlmError(LlmErrorKind::network, "LLM server error HTTP " + std::to_string(res->status));
  if (res->status != 200) throw LlmError(LlmErrorKind::protocol, "unexpected HTTP " + std::to_string(res->status));
  try {
    const Json reply = Json::parse(res->body);
    return reply.at("choices").at(0).at("text").get<std::string>();
  } catch (const Json::exception& e) {
    throw LlmError(LlmErrorKind::protocol, std::string("malformed completion response: ") + e.what());
  }
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

Suggestion llm_generate(std::string_view story, LlmTransport& transport, const LlmParams& params,
                        const RetryPolicy& retry) {
  const Json body = llm_request_body(build_prompt(story), params);
  auto delay = retry.base_delay;
  for (int attempt = 0;; ++attempt) {
    try {
      std::string text = trim(transport.complete(body));
      if (text.empty()) throw LlmError(LlmErrorKind::protocol, "LLM returned an empty completion");
      const int tokens = static_cast<int>(tokenize(text).size());
      return {ModelTag::LLM, std::move(text), tokens, Json{{"model", params.model}, {"attempts", attempt + 1}}};
    } catch (const LlmError& e) {
      if (!e.retryable() || attempt >= retry.max_retries) throw;
      if (retry.sleep)
        retry.sleep(delay);
      else
        std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
}

}  // namespace plotcast
