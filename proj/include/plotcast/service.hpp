#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "plotcast/pipeline.hpp"

namespace httplib {
class Server;
}

namespace plotcast {

struct ServiceOptions {
  std::filesystem::path store_dir;  // rankings/sessions/suggestions stores live here
  std::filesystem::path static_dir;  // empty: no static mount
  bool include_timing = false;       // put timing_ms in every suggest body
  int max_per_model = 16;
  int max_llm_in_flight = 4;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::function<void(int port)> on_bound;  // called once the socket is bound
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::map<std::string, std::string> headers;
};

/// Salt mixed into the request seed for the suggestion shuffle.
inline constexpr std::uint64_t kShuffleSalt = 0x73687566666c65ULL;

/// The /v1 API over a loaded model bundle. Models are read-only after
/// construction; stores are append-only JSONL files written by one writer.
class SuggestionService {
public:
  SuggestionService(ModelBundle bundle, ServiceOptions options);
  ~SuggestionService();

  /// Routes one request. Paths exclude the query string.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Blocks serving HTTP until stop() is called from another thread.
  void listen();
  void stop();
  /// Port actually bound (resolves port 0), or 0 before listen() binds.
  int port() const { return bound_port_.load(); }

  const ModelBundle& bundle() const { return bundle_; }

private:
  struct Session {
    std::string id;
    std::string created_at;
    std::vector<std::string> snapshots;
    std::vector<std::string> accepted;
  };

  HttpResponse suggest(const Json& request);
  HttpResponse post_ranking(const Json& request);
  HttpResponse post_questionnaire(const Json& request);
  HttpResponse create_session(const Json& request);
  HttpResponse accept(const std::string& session_id, const Json& request);
  HttpResponse get_session(const std::string& session_id);
  HttpResponse models() const;
  static Json session_json(const Session& s);

  void restore();
  std::string new_session_id();

  class Limiter {
  public:
    explicit Limiter(int slots) : free_(slots) {}
    void acquire();
    void release();

  private:
    std::mutex m_;
    std::condition_variable cv_;
    int free_;
  };

  ModelBundle bundle_;
  ServiceOptions options_;
  std::unique_ptr<JsonlAppender> rankings_, sessions_store_, suggestions_store_, questionnaires_;
  std::mutex state_mutex_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, Suggestion> issued_;
  Limiter llm_limiter_;
  std::mt19937_64 id_engine_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<int> bound_port_{0};
};

/// ServiceOptions from the "service" and "llm" config sections; stores go in the run directory.
ServiceOptions service_options(const Json& config, const std::filesystem::path& run_dir);

}  // namespace plotcast
