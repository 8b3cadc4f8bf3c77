#include "plotcast/service.hpp"

#include <chrono>
#include <ctime>
#include <regex>

#include <httplib.h>

#include "plotcast/random.hpp"

#ifndef PLOTCAST_VERSION
#define PLOTCAST_VERSION "dev"
#endif

namespace plotcast {

namespace fs = std::filesystem;

namespace {

HttpResponse json_response(int status, const Json& body) { return {status, body.dump(), {}}; }

HttpResponse error_response(int status, const std::string& category, const std::string& message) {
  return json_response(status, Json{{"error", {{"category", category}, {"message", message}}}});
}

struct RequestError {
  int status;
  std::string message;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool corpus_backed(ModelTag tag) { return tag == ModelTag::GT || tag == ModelTag::RH || tag == ModelTag::RF; }

// The draft's most recent full block, or a fallback without frames when the
// draft is shorter than one block.
struct DraftContext {
  std::string story;
  std::vector<std::string> tail_tokens;
  std::optional<StoryBlock> block;
};

DraftContext read_draft(const ModelBundle& bundle, const std::string& text) {
  DraftContext d;
  const int block_size = bundle.config.at("corpus").at("block_size").get<int>();
  const auto sentences = segment_sentences(text, segmenter_options(bundle.config));
  if (static_cast<int>(sentences.size()) >= block_size) {
    std::vector<Sentence> last(sentences.end() - block_size, sentences.end());
    auto blocks = build_blocks(last, "draft", block_size);
    d.block = blocks.front();
    d.story = d.block->text();
  } else {
    d.story = text;
  }
  d.tail_tokens = tokenize(d.story);
  return d;
}

std::vector<int> tail_source(const Vocab& vocab, std::span<const std::string> tokens, int max_len) {
  const std::size_t keep = std::min(tokens.size(), static_cast<std::size_t>(std::max(max_len, 1)));
  auto ids = vocab.encode(tokens.subspan(tokens.size() - keep));
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

std::string suggestion_id(std::uint64_t seed, ModelTag tag, int k, const std::string& text) {
  return "s-" + hex64(fnv1a(text, mix_seed(mix_seed(seed, fnv1a(to_string(tag))), static_cast<std::uint64_t>(k))));
}

}  // namespace

void SuggestionService::Limiter::acquire() {
  std::unique_lock lock(m_);
  cv_.wait(lock, [&] { return free_ > 0; });
  --free_;
}

void SuggestionService::Limiter::release() {
  {
    std::lock_guard lock(m_);
    ++free_;
  }
  cv_.notify_one();
}

ServiceOptions service_options(const Json& config, const fs::path& run_dir) {
  ServiceOptions o;
  const Json& s = config.at("service");
  o.store_dir = run_dir;
  o.static_dir = s.value("static_dir", std::string{});
  o.include_timing = s.value("include_timing", false);
  o.host = s.value("host", o.host);
  o.port = s.value("port", o.port);
  o.max_llm_in_flight = config.at("llm").value("max_in_flight", o.max_llm_in_flight);
  return o;
}

SuggestionService::SuggestionService(ModelBundle bundle, ServiceOptions options)
    : bundle_(std::move(bundle)),
      options_(std::move(options)),
      llm_limiter_(std::max(1, options_.max_llm_in_flight)),
      id_engine_(std::random_device{}()) {
  fs::create_directories(options_.store_dir);
  restore();
  rankings_ = std::make_unique<JsonlAppender>(options_.store_dir / "rankings.jsonl");
  sessions_store_ = std::make_unique<JsonlAppender>(options_.store_dir / "sessions.jsonl");
  suggestions_store_ = std::make_unique<JsonlAppender>(options_.store_dir / "suggestions.jsonl");
  questionnaires_ = std::make_unique<JsonlAppender>(options_.store_dir / "questionnaires.jsonl");
}

SuggestionService::~SuggestionService() = default;

void SuggestionService::restore() {
  const fs::path sessions = options_.store_dir / "sessions.jsonl";
  if (fs::exists(sessions))
    for (const auto& e : read_jsonl(sessions)) {
      const std::string id = e.value("session_id", std::string{});
      if (e.value("type", std::string{}) == "create") {
        Session s{id, e.value("created_at", std::string{}), {}, {}};
        if (e.contains("snapshot")) s.snapshots.push_back(e["snapshot"].get<std::string>());
        sessions_[id] = std::move(s);
      } else if (auto it = sessions_.find(id); it != sessions_.end()) {
        it->second.accepted.push_back(e.value("suggestion_id", std::string{}));
        it->second.snapshots.push_back(e.value("snapshot", std::string{}));
      }
    }
  const fs::path suggestions = options_.store_dir / "suggestions.jsonl";
  if (fs::exists(suggestions))
    for (const auto& e : read_jsonl(suggestions)) issued_[e.at("id").get<std::string>()] = suggestion_from_json(e);
}

std::string SuggestionService::new_session_id() {
  std::lock_guard lock(state_mutex_);
  return hex64(id_engine_()) + hex64(id_engine_());
}

HttpResponse SuggestionService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex session_path(R"(^/v1/sessions/([0-9a-f]+)$)");
  static const std::regex accept_path(R"(^/v1/sessions/([0-9a-f]+)/accept$)");
  auto parse = [&]() -> Json {
    if (body.empty()) return Json::object();
    Json j = Json::parse(body);
    if (!j.is_object()) throw RequestError{400, "request body must be a JSON object"};
    return j;
  };
  try {
    std::smatch m;
    if (method == "GET" && path == "/healthz")
      return json_response(200, Json{{"status", "ok"}, {"version", PLOTCAST_VERSION}});
    if (method == "GET" && path == "/v1/models") return models();
    if (method == "POST" && path == "/v1/suggest") return suggest(parse());
    if (method == "POST" && path == "/v1/rankings") return post_ranking(parse());
    if (method == "POST" && path == "/v1/questionnaires") return post_questionnaire(parse());
    if (method == "POST" && path == "/v1/sessions") return create_session(parse());
    if (method == "POST" && std::regex_match(path, m, accept_path)) return accept(m[1], parse());
    if (method == "GET" && std::regex_match(path, m, session_path)) return get_session(m[1]);
    return error_response(404, "not_found", method + " " + path + " is not an endpoint");
  } catch (const RequestError& e) {
    return error_response(e.status, e.status == 400 ? "bad_request" : "unprocessable", e.message);
  } catch (const Json::exception& e) {
    return error_response(400, "bad_request", std::string("malformed request: ") + e.what());
  } catch (const PipelineError& e) {
    return error_response(e.category() == ErrorCategory::missing_artifact ? 503 : 500, to_string(e.category()),
                          e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse SuggestionService::suggest(const Json& req) {
  const auto start = std::chrono::steady_clock::now();
  if (!req.contains("draft_text") || !req["draft_text"].is_string())
    throw RequestError{400, "draft_text must be a string"};
  const std::string draft = req["draft_text"].get<std::string>();
  if (!req.contains("models") || !req["models"].is_array() || req["models"].empty())
    throw RequestError{400, "models must be a non-empty array of model tags"};
  std::vector<ModelTag> tags;
  for (const auto& t : req["models"]) {
    auto tag = t.is_string() ? parse_model_tag(t.get<std::string>()) : std::nullopt;
    if (!tag) throw RequestError{400, "unknown model tag " + t.dump()};
    if (std::find(tags.begin(), tags.end(), *tag) == tags.end()) tags.push_back(*tag);
  }
  const int n = req.value("n_per_model", 1);
  if (n < 1 || n > options_.max_per_model)
    throw RequestError{400, "n_per_model must be between 1 and " + std::to_string(options_.max_per_model)};
  std::uint64_t seed;
  if (req.contains("seed")) {
    if (!req["seed"].is_number_unsigned()) throw RequestError{400, "seed must be a non-negative integer"};
    seed = req["seed"].get<std::uint64_t>();
  } else {
    std::lock_guard lock(state_mutex_);
    seed = id_engine_() >> 11;
  }
  const bool timing = req.value("timing", options_.include_timing);

  for (ModelTag tag : tags)
    if (!bundle_.has(tag)) return error_response(503, "model_not_loaded", to_string(tag) + " is not loaded");

  // Corpus-backed tags need the corpus block the draft continues.
  std::string book;
  const StoryBlock* context = nullptr;
  const std::vector<PlotSummary>* plots = nullptr;
  if (std::any_of(tags.begin(), tags.end(), corpus_backed)) {
    const std::string id = req.value("instance_id", std::string{});
    if (id.empty())
      throw RequestError{422, "GT, RH and RF need an instance_id naming a corpus block (\"book:n\")"};
    const auto colon = id.rfind(':');
    int index = -1;
    if (colon != std::string::npos) {
      book = id.substr(0, colon);
      try {
        index = std::stoi(id.substr(colon + 1));
      } catch (const std::exception&) {
        index = -1;
      }
    }
    auto bit = bundle_.corpus.blocks.find(book);
    auto pit = bundle_.corpus.plots.find(book);
    if (index < 0 || bit == bundle_.corpus.blocks.end() || pit == bundle_.corpus.plots.end())
      throw RequestError{422, "unknown instance_id " + id};
    for (const auto& b : bit->second)
      if (b.index == index) context = &b;
    plots = &pit->second;
    const bool has_next =
        std::any_of(plots->begin(), plots->end(), [&](const PlotSummary& p) { return p.index == index + 1; });
    if (!context || !has_next) throw RequestError{422, "instance " + id + " has no following block"};
  }

  const DraftContext draft_ctx = read_draft(bundle_, draft);
  const SamplerConfig base_sampler = sampler_config(bundle_.config.at("sampler"));
  const SamplerConfig base_storyline = sampler_config(bundle_.config.at("storyline_sampler"));
  const RandomBaselineConfig baselines = baseline_config(bundle_.config);

  Json errors = Json::array();
  std::vector<std::pair<std::string, Suggestion>> out;
  for (ModelTag tag : tags) {
    for (int k = 0; k < n; ++k) {
      const std::uint64_t s = mix_seed(mix_seed(seed, fnv1a(to_string(tag))), static_cast<std::uint64_t>(k));
      try {
        Suggestion sug;
        switch (tag) {
          case ModelTag::GT: {
            const auto& next = *std::find_if(plots->begin(), plots->end(),
                                             [&](const PlotSummary& p) { return p.index == context->index + 1; });
            sug = ground_truth(next);
            break;
          }
          case ModelTag::RH:
            sug = random_offset_plot(*plots, context->index, OffsetKind::history, baselines, s);
            break;
          case ModelTag::RF:
            sug = random_offset_plot(*plots, context->index, OffsetKind::future, baselines, s);
            break;
          case ModelTag::FGPT2: {
            FgptInput in;
            bool fallback = false;
            if (draft_ctx.block) {
              in = fgpt_input(bundle_, *draft_ctx.block);
            } else {
              const auto& mc = bundle_.fgpt->config();
              in.source = tail_source(*bundle_.vocab, draft_ctx.tail_tokens, mc.max_src_len - 2);
              in.frame = Eigen::VectorXd::Zero(mc.frame_dim);
              in.forecast = Eigen::VectorXd::Zero(mc.frame_dim);
              fallback = true;
            }
            SamplerConfig sc = base_sampler;
            sc.seed = s;
            sug = fgpt_generate(*bundle_.fgpt, *bundle_.vocab, in, sc);
            sug.provenance["frame_fallback"] = fallback;
            break;
          }
          case ModelTag::PW: {
            const int max_len = bundle_.pw_storyline->config().max_src_len;
            std::vector<int> src;
            if (draft_ctx.block && bundle_.word_idf)
              src = encode_source(*bundle_.vocab, extract_plot(*draft_ctx.block, *bundle_.word_idf).text, max_len);
            else
              src = tail_source(*bundle_.vocab, draft_ctx.tail_tokens, max_len);
            SamplerConfig sc = base_sampler, st = base_storyline;
            sc.seed = s;
            st.seed = mix_seed(s, 1);
            sug = pw_generate({*bundle_.pw_storyline, *bundle_.pw_plot, *bundle_.vocab}, src, st, sc);
            break;
          }
          case ModelTag::LLM: {
            RetryPolicy retry;
            retry.max_retries = bundle_.config.at("llm").value("max_retries", retry.max_retries);
            llm_limiter_.acquire();
            try {
              sug = llm_generate(draft_ctx.story, *bundle_.llm, llm_params(bundle_.config), retry);
            } catch (...) {
              llm_limiter_.release();
              throw;
            }
            llm_limiter_.release();
            break;
          }
        }
        out.emplace_back(suggestion_id(seed, tag, k, sug.text), std::move(sug));
      } catch (const NoValidOffset& e) {
        errors.push_back(Json{{"model_tag", to_string(tag)}, {"error", "no_valid_offset"}, {"message", e.what()}});
        break;
      } catch (const LlmError& e) {
        errors.push_back(Json{{"model_tag", to_string(tag)}, {"error", to_string(e.kind())}, {"message", e.what()}});
        break;
      }
    }
  }

  Rng rng(mix_seed(seed, kShuffleSalt));
  rng.shuffle(std::span(out));

  Json list = Json::array();
  {
    std::lock_guard lock(state_mutex_);
    for (const auto& [id, sug] : out) {
      Json j = suggestion_to_json(sug);
      j["id"] = id;
      list.push_back(j);
      if (issued_.emplace(id, sug).second) suggestions_store_->append(j);
    }
  }
  Json body{{"seed", seed}, {"suggestions", list}, {"errors", errors}};
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (timing) body["timing_ms"] = ms;
  HttpResponse r = json_response(200, body);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", ms);
  r.headers["X-Timing-Ms"] = buf;
  return r;
}

HttpResponse SuggestionService::post_ranking(const Json& req) {
  RankingRecord record;
  try {
    record = ranking_from_json(req);
  } catch (const Json::exception& e) {
    throw RequestError{400, std::string("malformed ranking: ") + e.what()};
  }
  if (auto reason = validate_ranking(record)) return error_response(400, "invalid_ranking", *reason);
  rankings_->append(ranking_to_json(record));
  return json_response(201, Json{{"stored", true}});
}

HttpResponse SuggestionService::post_questionnaire(const Json& req) {
  QuestionnaireResponse response;
  try {
    response = questionnaire_from_json(req);
  } catch (const Json::exception& e) {
    throw RequestError{400, std::string("malformed questionnaire: ") + e.what()};
  }
  std::vector<std::string> models, rejected;
  for (ModelTag tag : kAllModelTags) models.push_back(to_string(tag));
  questionnaire_scores(std::span(&response, 1), models, &rejected);
  if (!rejected.empty()) return error_response(400, "invalid_questionnaire", rejected.front());
  questionnaires_->append(questionnaire_to_json(response));
  return json_response(201, Json{{"stored", true}});
}

Json SuggestionService::session_json(const Session& s) {
  return Json{{"id", s.id}, {"created_at", s.created_at}, {"snapshots", s.snapshots}, {"accepted", s.accepted}};
}

HttpResponse SuggestionService::create_session(const Json& req) {
  Session s{new_session_id(), utc_now(), {}, {}};
  Json event{{"type", "create"}, {"session_id", s.id}, {"created_at", s.created_at}};
  if (req.contains("draft_text")) {
    s.snapshots.push_back(req.at("draft_text").get<std::string>());
    event["snapshot"] = s.snapshots.back();
  }
  std::lock_guard lock(state_mutex_);
  sessions_store_->append(event);
  sessions_[s.id] = s;
  return json_response(201, session_json(s));
}

HttpResponse SuggestionService::accept(const std::string& session_id, const Json& req) {
  const std::string sid = req.value("suggestion_id", std::string{});
  if (sid.empty()) throw RequestError{400, "suggestion_id is required"};
  std::lock_guard lock(state_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return error_response(404, "unknown_session", "no session " + session_id);
  auto sug = issued_.find(sid);
  if (sug == issued_.end()) return error_response(409, "unknown_suggestion", "no suggestion " + sid);
  Session& s = it->second;
  std::string snapshot = req.contains("draft_text") ? req["draft_text"].get<std::string>()
                         : s.snapshots.empty()      ? std::string{}
                                                    : s.snapshots.back();
  if (!snapshot.empty() && snapshot.back() != ' ' && snapshot.back() != '\n') snapshot.push_back(' ');
  snapshot += sug->second.text;
  sessions_store_->append(
      Json{{"type", "accept"}, {"session_id", s.id}, {"suggestion_id", sid}, {"snapshot", snapshot}});
  s.accepted.push_back(sid);
  s.snapshots.push_back(snapshot);
  return json_response(200, session_json(s));
}

HttpResponse SuggestionService::get_session(const std::string& session_id) {
  std::lock_guard lock(state_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return error_response(404, "unknown_session", "no session " + session_id);
  return json_response(200, session_json(it->second));
}

HttpResponse SuggestionService::models() const {
  Json list = Json::array();
  for (ModelTag tag : kAllModelTags)
    if (bundle_.has(tag)) {
      Json j{{"model_tag", to_string(tag)}, {"corpus_backed", corpus_backed(tag)}};
      if (auto h = bundle_.model_hashes.find(to_string(tag)); h != bundle_.model_hashes.end())
        j["checkpoint_hash"] = h->second;
      list.push_back(j);
    }
  return json_response(200, Json{{"models", list}, {"config_hash", bundle_.config_hash}});
}

void SuggestionService::listen() {
  server_ = std::make_unique<httplib::Server>();
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, "application/json");
  };
  for (const char* p : {"/healthz", "/v1/models", R"(/v1/sessions/([0-9a-f]+))"}) server_->Get(p, route);
  for (const char* p : {"/v1/suggest", "/v1/rankings", "/v1/questionnaires", "/v1/sessions",
                        R"(/v1/sessions/([0-9a-f]+)/accept)"})
    server_->Post(p, route);
  if (!options_.static_dir.empty() && !server_->set_mount_point("/", options_.static_dir.string()))
    throw PipelineError(ErrorCategory::config, "static_dir " + options_.static_dir.string() + " is not a directory");
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0)
    throw PipelineError(ErrorCategory::external,
                        "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  bound_port_ = port;
  if (options_.on_bound) options_.on_bound(port);
  server_->listen_after_bind();
}

void SuggestionService::stop() {
  if (server_) server_->stop();
}

}  // namespace plotcast
