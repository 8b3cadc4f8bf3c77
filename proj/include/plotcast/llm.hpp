#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "plotcast/generators.hpp"
#include "plotcast/jsonl.hpp"

namespace plotcast {

struct LlmParams {
  std::string model = "text-davinci-002";
  double temperature = 0.95;
  double top_p = 0.95;
  int max_tokens = 76;
  double frequency_penalty = 0.5;
  double presence_penalty = 0.5;
  int best_of = 5;
};

std::string build_prompt(std::string_view story);
Json llm_request_body(std::string_view prompt, const LlmParams& params);

enum class LlmErrorKind { auth, network, timeout, quota, protocol };

std::string to_string(LlmErrorKind kind);

class LlmError : public std::runtime_error {
public:
  LlmError(LlmErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  LlmErrorKind kind() const { return kind_; }
  bool retryable() const { return kind_ != LlmErrorKind::auth && kind_ != LlmErrorKind::protocol; }

private:
  LlmErrorKind kind_;
};

/// Sends one completion request body and returns the completion text.
class LlmTransport {
public:
  virtual ~LlmTransport() = default;
  virtual std::string complete(const Json& body) = 0;
};

/// Canned completions for tests and offline runs. Never fails.
class MockTransport : public LlmTransport {
public:
  explicit MockTransport(std::string canned = {}) : canned_(std::move(canned)) {}
  std::string complete(const Json& body) override;
  const Json& last_body() const { return last_body_; }
  int calls() const { return calls_; }

private:
  std::string canned_;
  Json last_body_;
  int calls_ = 0;
};

struct HttpTransportConfig {
  std::string endpoint = "https://api.openai.com/v1/completions";
  std::string api_key;
  std::chrono::milliseconds timeout{10000};

  /// PLOTCAST_LLM_ENDPOINT and PLOTCAST_LLM_API_KEY (falling back to OPENAI_API_KEY).
  static HttpTransportConfig from_environment();
};

class HttpTransport : public LlmTransport {
public:
  explicit HttpTransport(HttpTransportConfig config);
  std::string complete(const Json& body) override;

private:
  HttpTransportConfig config_;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds base_delay{250};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to std::this_thread::sleep_for
};

/// Assembles the prompt from the block text, retries transient failures with
/// exponential backoff, and returns the trimmed completion.
Suggestion llm_generate(std::string_view story, LlmTransport& transport, const LlmParams& params = {},
                        const RetryPolicy& retry = {});

}  // namespace plotcast
