// plotcast: drives the pipeline one stage at a time and serves suggestions.

#include <chrono>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "plotcast/config.hpp"
#include "plotcast/pipeline.hpp"
#include "plotcast/service.hpp"

namespace fs = std::filesystem;
using namespace plotcast;

namespace {

struct Common {
  std::string config_file;
  std::string run_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void progress_to_stderr(const Json& event) {
  Json e = event;
  e["ts_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
  std::cerr << e.dump() << std::endl;
}

RunContext make_context(const Common& c, std::vector<std::string> extra) {
  std::optional<fs::path> file;
  if (!c.config_file.empty()) file = c.config_file;
  std::vector<std::string> overrides = c.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));

  Json saved;
  const Json* base = nullptr;
  if (!c.run_dir.empty() && fs::exists(fs::path(c.run_dir) / "config.json")) {
    saved = Json::parse(read_text(fs::path(c.run_dir) / "config.json"));
    base = &saved;
  }
  Json config = load_config(file, overrides, base);
  std::optional<fs::path> dir;
  if (!c.run_dir.empty()) dir = fs::path(c.run_dir);
  RunContext ctx{config, resolve_run_dir(config, dir), progress_to_stderr};
  fs::create_directories(ctx.run_dir);
  write_text_atomic(ctx.run_dir / "config.json", config.dump(2) + "\n");
  ctx.emit("config", {{"run_dir", ctx.run_dir.string()}, {"config_hash", config_hash(config)}});
  return ctx;
}

SuggestionService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int fail(ErrorCategory category, const std::string& message) {
  std::cerr << Json{{"error", {{"category", to_string(category)}, {"message", message}}}}.dump() << std::endl;
  return exit_code(category);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Story-plot forecasting pipeline and suggestion service"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PLOTCAST_VERSION);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_file, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--run-dir", common.run_dir, "Artifact directory (default runs/<config hash>)");
    sub->add_option("--set", common.overrides, "Config override key.path=value (repeatable)");
    sub->add_option("--seed", common.seed, "Global seed");
  };

  std::vector<std::string> extra;
  std::string books, lexicon, models = "", rankings, study, questionnaires, static_dir, host;
  int block_size = 0, min_freq = 0, max_instances = -1, port = -1;
  long steps = 0;
  bool proxy = false, paired = false, published_layout = false;

  auto* ingest = app.add_subcommand("ingest", "Segment books into blocks, split by book, build the vocabulary");
  ingest->add_option("--in", books, "Directory of .txt books");
  ingest->add_option("--block-size", block_size, "Sentences per block");
  ingest->add_option("--min-freq", min_freq, "Vocabulary frequency threshold");
  auto* extract = app.add_subcommand("extract-plots", "Extract three-sentence plot summaries");
  auto* frames = app.add_subcommand("frames", "Compute frame vectors for every block");
  frames->add_option("--lexicon", lexicon, "Frame lexicon TSV");
  auto* forecaster = app.add_subcommand("train-forecaster", "Fit the boosted next-frame forecaster");
  auto* fgpt = app.add_subcommand("train-fgpt", "Train the frame-conditioned plot generator");
  fgpt->add_option("--steps", steps, "Optimizer steps");
  auto* pw = app.add_subcommand("train-pw", "Train the two Plan-and-Write stages");
  pw->add_option("--steps", steps, "Optimizer steps per stage");
  auto* generate = app.add_subcommand("generate", "Generate suggestions for filtered test instances");
  generate->add_option("--models", models, "Comma-separated model tags");
  generate->add_option("--max-instances", max_instances, "Cap on kept instances (0 = all)");
  auto* evaluate = app.add_subcommand("evaluate", "Score generated suggestions (BLEU-4, METEOR, ROUGE-L, cosine)");
  evaluate->add_option("--models", models, "Comma-separated model tags");
  evaluate->add_flag("--published-layout", published_layout, "Keep the Fusion-Seq placeholder row");
  auto* stats = app.add_subcommand("stats", "Mean ranks and t-tests, study and questionnaire tables");
  stats->add_option("--rankings", rankings, "Ranking records (default: the run's ranking store)");
  stats->add_option("--study", study, "Study records for similarity and coverage tables");
  stats->add_flag("--proxy-study", proxy, "Build study records from generated instances");
  stats->add_option("--questionnaires", questionnaires, "Questionnaire responses");
  stats->add_flag("--paired", paired, "Paired instead of Welch t-test");
  stats->add_flag("--published-layout", published_layout, "Keep the Fusion-Seq placeholder column");
  auto* serve = app.add_subcommand("serve", "Serve the /v1 HTTP API");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--static", static_dir, "Directory of UI assets to serve at /");
  for (auto* sub : app.get_subcommands({})) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::usage);
  }

  try {
    if (!books.empty()) extra.push_back("data.books=" + fs::absolute(books).string());
    if (!lexicon.empty()) extra.push_back("data.lexicon=" + fs::absolute(lexicon).string());
    if (block_size > 0) extra.push_back("corpus.block_size=" + std::to_string(block_size));
    if (min_freq > 0) extra.push_back("corpus.min_freq=" + std::to_string(min_freq));
    if (steps > 0) extra.push_back(std::string(fgpt->parsed() ? "fgpt" : "pw") + ".train.steps=" + std::to_string(steps));
    if (max_instances >= 0) extra.push_back("evaluation.max_instances=" + std::to_string(max_instances));
    if (published_layout) extra.push_back("evaluation.published_layout=true");
    if (paired) extra.push_back("evaluation.ttest=paired");
    if (!models.empty()) extra.push_back("evaluation.models=" + models);
    if (!host.empty()) extra.push_back("service.host=" + host);
    if (port >= 0) extra.push_back("service.port=" + std::to_string(port));
    if (!static_dir.empty()) extra.push_back("service.static_dir=" + fs::absolute(static_dir).string());

    const RunContext ctx = make_context(common, extra);
    auto model_list = [&] { return parse_model_tags(ctx.config.at("evaluation").at("models").get<std::string>()); };

    if (ingest->parsed()) {
      const auto s = run_ingest(ctx);
      std::cout << ctx.run_dir.string() << '\n';
      (void)s;
    } else if (extract->parsed()) {
      run_extract_plots(ctx);
    } else if (frames->parsed()) {
      run_frames(ctx);
    } else if (forecaster->parsed()) {
      run_train_forecaster(ctx);
    } else if (fgpt->parsed()) {
      run_train_fgpt(ctx);
    } else if (pw->parsed()) {
      run_train_pw(ctx);
    } else if (generate->parsed()) {
      const auto s = run_generate(ctx, model_list());
      std::cout << s.kept << " of " << s.candidates << " instances kept\n";
    } else if (evaluate->parsed()) {
      std::cout << run_evaluate(ctx, model_list()).table;
    } else if (stats->parsed()) {
      StatsOptions o;
      if (!rankings.empty()) o.rankings = rankings;
      if (!study.empty()) o.study = study;
      if (!questionnaires.empty()) o.questionnaires = questionnaires;
      o.proxy_study = proxy;
      std::cout << run_stats(ctx, o);
    } else if (serve->parsed()) {
      ServiceOptions options = service_options(ctx.config, ctx.run_dir);
      options.on_bound = [&](int bound) {
        ctx.emit("serve", {{"host", options.host}, {"port", bound}});
      };
      SuggestionService service(load_bundle(ctx), options);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.listen();
      g_service = nullptr;
    }
    return 0;
  } catch (const PipelineError& e) {
    return fail(e.category(), e.what());
  } catch (const ConfigError& e) {
    return fail(ErrorCategory::config, e.what());
  } catch (const IngestError& e) {
    return fail(ErrorCategory::input, e.what());
  } catch (const Json::exception& e) {
    return fail(ErrorCategory::input, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(ErrorCategory::usage, e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCategory::internal, e.what());
  }
}
