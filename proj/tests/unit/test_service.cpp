#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <unistd.h>

#include "plotcast/config.hpp"
#include "plotcast/pipeline.hpp"
#include "plotcast/random.hpp"
#include "plotcast/service.hpp"

using namespace plotcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plotcast_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::vector<std::string> kTinyModel{
    "fgpt.model.d_model=16", "fgpt.model.n_heads=2",   "fgpt.model.n_layers_enc=1", "fgpt.model.n_layers_dec=1",
    "fgpt.model.d_ff=32",    "fgpt.train.steps=30",    "fgpt.train.batch_size=8",   "pw.model.d_model=16",
    "pw.model.n_heads=2",    "pw.model.n_layers_enc=1", "pw.model.n_layers_dec=1",  "pw.model.d_ff=32",
    "pw.train.steps=20",     "pw.train.batch_size=8",  "forecaster.n_estimators=10"};

// One small trained run shared by every case.
const RunContext& tiny_run() {
  static const RunContext ctx = [] {
    RunContext c{load_config(std::nullopt, kTinyModel), scratch("run"), nullptr};
    run_ingest(c);
    run_extract_plots(c);
    run_frames(c);
    run_train_forecaster(c);
    run_train_fgpt(c);
    run_train_pw(c);
    return c;
  }();
  return ctx;
}

SuggestionService make_service(const std::string& store) {
  ServiceOptions o = service_options(tiny_run().config, scratch(store));
  return SuggestionService(load_bundle(tiny_run()), o);
}

// A block with a following plot and at least 12 earlier ones.
std::string instance_id(const ModelBundle& b) {
  for (const auto& [book, plots] : b.corpus.plots)
    if (plots.size() > 14) return book + ":" + std::to_string(plots[13].index);
  return "";
}

std::string block_text(const ModelBundle& b) { return b.corpus.blocks.begin()->second.at(3).text(); }

Json post(SuggestionService& s, const std::string& path, const Json& body, int expect) {
  const auto r = s.handle("POST", path, body.dump());
  CHECK_MESSAGE(r.status == expect, r.body);
  return Json::parse(r.body);
}

}  // namespace

TEST_CASE("config layering and validation") {
  const Json d = load_config(std::nullopt);
  CHECK(d.at("sampler").at("top_k") == 100);
  const std::vector<std::string> o{"sampler.top_k=5", "evaluation.models=GT,PW", "seed=99"};
  const Json c = load_config(std::nullopt, o);
  CHECK(c.at("sampler").at("top_k") == 5);
  CHECK(c.at("evaluation").at("models") == "GT,PW");
  CHECK(config_hash(c) != config_hash(d));
  Json only_sampler = d;
  apply_override(only_sampler, "sampler.top_k=5");
  CHECK(config_hash(only_sampler) == config_hash(d));
  CHECK_THROWS_AS(apply_override(only_sampler, "sampler.top_q=5"), ConfigError);
  CHECK_THROWS_AS(apply_override(only_sampler, "nonsense"), ConfigError);

  const fs::path dir = scratch("config");
  write_text_atomic(dir / "c.json", R"({"seed": 4, "data": {"books": "books"}, "corpus": {"block_size": 10}})");
  const Json f = load_config(dir / "c.json");
  CHECK(f.at("seed") == 4);
  CHECK(f.at("corpus").at("min_freq") == 3);
  CHECK(fs::path(f.at("data").at("books").get<std::string>()) == (dir / "books").lexically_normal());
  write_text_atomic(dir / "bad.json", R"({"corpus": {"blocksize": 10}})");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);

  const Json base = load_config(std::nullopt, o);
  CHECK(load_config(std::nullopt, {}, &base).at("sampler").at("top_k") == 5);
}

TEST_CASE("error categories map to distinct exit codes") {
  CHECK(exit_code(ErrorCategory::config) == 2);
  CHECK(exit_code(ErrorCategory::input) == 3);
  CHECK(exit_code(ErrorCategory::missing_artifact) == 4);
  CHECK(exit_code(ErrorCategory::training) == 5);
  CHECK(exit_code(ErrorCategory::external) == 6);
  CHECK(exit_code(ErrorCategory::internal) == 1);
  CHECK(to_string(ErrorCategory::missing_artifact) == "missing_artifact");
}

TEST_CASE("a stage run out of order names the stage to run first") {
  RunContext c{load_config(std::nullopt), scratch("empty"), nullptr};
  try {
    run_frames(c);
    FAIL("expected a missing artifact");
  } catch (const PipelineError& e) {
    CHECK(e.category() == ErrorCategory::missing_artifact);
    CHECK(std::string(e.what()).find("plotcast ingest") != std::string::npos);
  }
  CHECK(resolve_run_dir(c.config, std::nullopt) == fs::path("runs") / config_hash(c.config));
}

TEST_CASE("health and model listing") {
  auto s = make_service("health");
  const auto h = s.handle("GET", "/healthz", "");
  CHECK(h.status == 200);
  CHECK(Json::parse(h.body).at("version") == PLOTCAST_VERSION);
  const Json m = Json::parse(s.handle("GET", "/v1/models", "").body);
  std::set<std::string> tags;
  for (const auto& e : m.at("models")) tags.insert(e.at("model_tag").get<std::string>());
  CHECK(tags == std::set<std::string>{"GT", "RH", "RF", "PW", "FGPT2", "LLM"});
  CHECK(m.at("config_hash") == config_hash(tiny_run().config));
  CHECK(s.handle("GET", "/v1/nothing", "").status == 404);
}

TEST_CASE("fgpt suggestions stay inside the length band") {
  auto s = make_service("band");
  const Json body = post(s, "/v1/suggest",
                         {{"draft_text", block_text(s.bundle())}, {"models", {"FGPT2"}}, {"n_per_model", 3}, {"seed", 1}},
                         200);
  REQUIRE(body.at("suggestions").size() == 3);
  for (const auto& sug : body.at("suggestions")) {
    CHECK(sug.at("token_count") >= 36);
    CHECK(sug.at("token_count") <= 76);
    CHECK(sug.at("provenance").at("frame_fallback") == false);
  }
  const Json short_draft =
      post(s, "/v1/suggest", {{"draft_text", "It was cold."}, {"models", {"FGPT2", "PW"}}, {"seed", 2}}, 200);
  CHECK(short_draft.at("suggestions").size() == 2);
}

TEST_CASE("seeded requests replay byte for byte") {
  auto s = make_service("replay");
  const Json req{{"draft_text", block_text(s.bundle())},
                 {"models", {"GT", "RH", "RF", "PW", "FGPT2", "LLM"}},
                 {"instance_id", instance_id(s.bundle())},
                 {"n_per_model", 2},
                 {"seed", 77}};
  const auto a = s.handle("POST", "/v1/suggest", req.dump());
  const auto b = s.handle("POST", "/v1/suggest", req.dump());
  REQUIRE(a.status == 200);
  CHECK(a.body == b.body);
  auto fresh = make_service("replay2");
  CHECK(fresh.handle("POST", "/v1/suggest", req.dump()).body == a.body);
  Json other = req;
  other["seed"] = 78;
  CHECK(s.handle("POST", "/v1/suggest", other.dump()).body != a.body);
}

TEST_CASE("suggestion order is the seeded shuffle of request order") {
  auto s = make_service("shuffle");
  const std::uint64_t seed = 12345;
  const Json body = post(s, "/v1/suggest",
                         {{"draft_text", "x"},
                          {"models", {"GT", "RH", "LLM"}},
                          {"instance_id", instance_id(s.bundle())},
                          {"n_per_model", 2},
                          {"seed", seed}},
                         200);
  const std::vector<std::string> unshuffled{"GT", "GT", "RH", "RH", "LLM", "LLM"};
  std::vector<int> perm{0, 1, 2, 3, 4, 5};
  Rng(mix_seed(seed, kShuffleSalt)).shuffle(std::span<int>(perm));
  REQUIRE(body.at("suggestions").size() == 6);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(body["suggestions"][i].at("model_tag") == unshuffled[static_cast<std::size_t>(perm[i])]);
}

TEST_CASE("suggest request validation") {
  auto s = make_service("validate");
  post(s, "/v1/suggest", {{"models", {"FGPT2"}}}, 400);
  post(s, "/v1/suggest", {{"draft_text", "x"}, {"models", Json::array()}}, 400);
  post(s, "/v1/suggest", {{"draft_text", "x"}, {"models", {"GPT9"}}}, 400);
  post(s, "/v1/suggest", {{"draft_text", "x"}, {"models", {"FGPT2"}}, {"n_per_model", 0}}, 400);
  post(s, "/v1/suggest", {{"draft_text", "x"}, {"models", {"FGPT2"}}, {"seed", -3}}, 400);
  post(s, "/v1/suggest", {{"draft_text", "x"}, {"models", {"GT"}}}, 422);
  post(s, "/v1/suggest", {{"draft_text", "x"}, {"models", {"GT"}}, {"instance_id", "nobook:3"}}, 422);
  CHECK(s.handle("POST", "/v1/suggest", "{not json").status == 400);
  CHECK(s.handle("POST", "/v1/suggest", "[1]").status == 400);

  ModelBundle partial = load_bundle(tiny_run());
  partial.fgpt.reset();
  SuggestionService lean(std::move(partial), service_options(tiny_run().config, scratch("lean")));
  const Json e = post(lean, "/v1/suggest", {{"draft_text", "x"}, {"models", {"FGPT2"}}}, 503);
  CHECK(e.at("error").at("category") == "model_not_loaded");
}

TEST_CASE("history offsets that cannot exist are reported per model") {
  auto s = make_service("offsets");
  const std::string book = s.bundle().corpus.plots.begin()->first;
  const int first = s.bundle().corpus.plots.begin()->second.front().index;
  const Json body = post(
      s, "/v1/suggest",
      {{"draft_text", "x"}, {"models", {"RH", "RF"}}, {"instance_id", book + ":" + std::to_string(first)}, {"seed", 3}},
      200);
  REQUIRE(body.at("errors").size() == 1);
  CHECK(body["errors"][0].at("model_tag") == "RH");
  CHECK(body["errors"][0].at("error") == "no_valid_offset");
  CHECK(body.at("suggestions").size() == 1);
}

TEST_CASE("rankings are validated and stored for the statistics stage") {
  const fs::path store = scratch("rankings");
  std::vector<RankingRecord> sent;
  {
    SuggestionService s(load_bundle(tiny_run()), service_options(tiny_run().config, store));
    post(s, "/v1/rankings",
         {{"instance_id", "b:1"}, {"aspect", "consistency"}, {"ranks", {{"GT", 1}, {"RH", 1}, {"RF", 2}}}}, 400);
    post(s, "/v1/rankings", {{"instance_id", "b:1"}, {"aspect", "consistency"}}, 400);
    Rng rng(8);
    const std::vector<std::string> tags{"GT", "RH", "RF", "PW", "FGPT2", "LLM"};
    for (int i = 0; i < 1000; ++i) {
      std::vector<int> perm{1, 2, 3, 4, 5, 6};
      rng.shuffle(std::span<int>(perm));
      RankingRecord r{"b:" + std::to_string(i), i % 3 ? "consistency" : "storiability", {}, "rater"};
      for (std::size_t k = 0; k < tags.size(); ++k) r.ranks[tags[k]] = perm[k];
      sent.push_back(r);
      post(s, "/v1/rankings", ranking_to_json(r), 201);
    }
  }
  std::vector<RankingRecord> stored;
  for (const auto& j : read_jsonl(store / "rankings.jsonl")) stored.push_back(ranking_from_json(j));
  REQUIRE(stored.size() == sent.size());
  const auto a = mean_ranks(sent), b = mean_ranks(stored);
  for (const auto& [tag, m] : a) CHECK(b.at(tag).mean == m.mean);
}

TEST_CASE("questionnaires reject unknown tags") {
  auto s = make_service("questionnaires");
  post(s, "/v1/questionnaires",
       {{"respondent", "w1"}, {"inspiring", {"LLM"}}, {"picks",
         {{"helpfulness", {{"most", "GT"}, {"least", "PW"}}},
          {"readability", {{"most", "LLM"}, {"least", "RH"}}},
          {"creativity", {{"most", "FGPT2"}, {"least", "RF"}}}}}},
       201);
  post(s, "/v1/questionnaires",
       {{"respondent", "w3"}, {"inspiring", Json::array()}, {"picks", {{"helpfulness", {{"most", "GT"}, {"least", "PW"}}}}}},
       400);
  post(s, "/v1/questionnaires", {{"respondent", "w2"}, {"inspiring", {"HAL"}}, {"picks", Json::object()}}, 400);
}

TEST_CASE("sessions record accepted suggestions and survive a restart") {
  const fs::path store = scratch("sessions");
  std::string sid, sug_id, text;
  {
    SuggestionService s(load_bundle(tiny_run()), service_options(tiny_run().config, store));
    const Json session = post(s, "/v1/sessions", {{"draft_text", "Once upon a time."}}, 201);
    sid = session.at("id").get<std::string>();
    const Json sug = post(s, "/v1/suggest", {{"draft_text", "Once upon a time."}, {"models", {"LLM"}}, {"seed", 5}}, 200);
    sug_id = sug["suggestions"][0].at("id").get<std::string>();
    text = sug["suggestions"][0].at("text").get<std::string>();

    post(s, "/v1/sessions/" + sid + "/accept", Json::object(), 400);
    post(s, "/v1/sessions/" + sid + "/accept", {{"suggestion_id", "s-nope"}}, 409);
    post(s, "/v1/sessions/00ff/accept", {{"suggestion_id", sug_id}}, 404);
    const Json after = post(s, "/v1/sessions/" + sid + "/accept", {{"suggestion_id", sug_id}}, 200);
    CHECK(after.at("snapshots").back() == "Once upon a time. " + text);
    CHECK(s.handle("GET", "/v1/sessions/abc123", "").status == 404);
  }
  SuggestionService again(load_bundle(tiny_run()), service_options(tiny_run().config, store));
  const auto r = again.handle("GET", "/v1/sessions/" + sid, "");
  REQUIRE(r.status == 200);
  const Json j = Json::parse(r.body);
  CHECK(j.at("accepted") == Json::array({sug_id}));
  CHECK(j.at("snapshots").size() == 2);
  post(again, "/v1/sessions/" + sid + "/accept", {{"suggestion_id", sug_id}}, 200);
}

TEST_CASE("the cli reports configuration errors with its exit code") {
  const fs::path dir = scratch("cli");
  write_text_atomic(dir / "bad.json", R"({"corpus": {"blocksize": 3}})");
  const std::string cli = PLOTCAST_CLI_PATH;
  const std::string cmd = "\"" + cli + "\" ingest --config " + (dir / "bad.json").string() + " --run-dir " +
                          (dir / "run").string() + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(rc));
  CHECK(WEXITSTATUS(rc) == exit_code(ErrorCategory::config));
  const int missing = std::system(("\"" + cli + "\" frames --run-dir " + (dir / "fresh").string() + " 2>/dev/null").c_str());
  CHECK(WEXITSTATUS(missing) == exit_code(ErrorCategory::missing_artifact));
  CHECK(WEXITSTATUS(std::system(("\"" + cli + "\" --version >/dev/null").c_str())) == 0);
}
