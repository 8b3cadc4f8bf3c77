#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plotcast/config.hpp"
#include "plotcast/evaluation.hpp"
#include "plotcast/frames.hpp"
#include "plotcast/gbm.hpp"
#include "plotcast/generators.hpp"
#include "plotcast/llm.hpp"
#include "plotcast/plots.hpp"
#include "plotcast/training.hpp"

namespace plotcast {

enum class ErrorCategory { usage, config, input, missing_artifact, training, external, internal };

std::string to_string(ErrorCategory c);
int exit_code(ErrorCategory c);

class PipelineError : public std::runtime_error {
public:
  PipelineError(ErrorCategory category, const std::string& what) : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const { return category_; }

private:
  ErrorCategory category_;
};

/// Receives machine-readable progress events.
using ProgressSink = std::function<void(const Json&)>;

struct RunContext {
  Json config;
  std::filesystem::path run_dir;
  ProgressSink progress;

  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }
  std::filesystem::path artifact(const std::string& name) const { return run_dir / name; }
  void emit(const std::string& stage, Json fields) const;
};

/// runs/<config hash> under `root` unless an explicit directory is given.
std::filesystem::path resolve_run_dir(const Json& config, const std::optional<std::filesystem::path>& explicit_dir,
                                      const std::filesystem::path& root = "runs");

// Stage drivers. Each reads what earlier stages wrote to the run directory
// and throws PipelineError(missing_artifact) naming the stage to run first.

struct IngestSummary {
  std::map<std::string, int> blocks_per_book;
  CorpusSplit split;
  int vocab_size = 0;
};

IngestSummary run_ingest(const RunContext& ctx);
void run_extract_plots(const RunContext& ctx);
void run_frames(const RunContext& ctx);
void run_train_forecaster(const RunContext& ctx);
nn::TrainSummary run_train_fgpt(const RunContext& ctx);
std::pair<nn::TrainSummary, nn::TrainSummary> run_train_pw(const RunContext& ctx);

struct GenerateSummary {
  int candidates = 0;
  int kept = 0;
  std::map<std::string, int> dropped;  // reason category -> count
};

GenerateSummary run_generate(const RunContext& ctx, const std::vector<ModelTag>& models);

struct EvaluateResult {
  MetricReport report;
  std::string table;
};

EvaluateResult run_evaluate(const RunContext& ctx, const std::vector<ModelTag>& models);

struct StatsOptions {
  std::optional<std::filesystem::path> rankings;        // defaults to the run's ranking store
  std::optional<std::filesystem::path> study;           // similarity and coverage study input
  std::optional<std::filesystem::path> questionnaires;  // questionnaire responses
  bool proxy_study = false;                             // build a study file from generated instances
};

/// Returns the rendered tables, concatenated.
std::string run_stats(const RunContext& ctx, const StatsOptions& options);

/// Stand-in study records: the next block plays the written follow-up story.
std::vector<StudyRecord> build_proxy_study(const RunContext& ctx);

// Loaded artifacts shared by generation and the service.

struct BookIndex {
  std::map<std::string, std::vector<StoryBlock>> blocks;   // by book, ordered by index
  std::map<std::string, std::vector<PlotSummary>> plots;   // by book, ordered by index
  std::map<std::string, std::vector<Eigen::VectorXd>> frames;
  std::map<std::string, std::vector<Eigen::VectorXd>> forecasts;  // forecast for block index + 1
};

struct ModelBundle {
  Json config;
  std::string config_hash;
  std::optional<Vocab> vocab;
  std::optional<FrameLexicon> lexicon;
  std::optional<IdfTable> frame_idf;
  std::optional<WordIdf> word_idf;
  std::optional<GbmForest> forecaster;
  std::optional<nn::Seq2SeqModel<float>> fgpt;
  std::optional<nn::Seq2SeqModel<float>> pw_storyline;
  std::optional<nn::Seq2SeqModel<float>> pw_plot;
  std::shared_ptr<LlmTransport> llm;
  BookIndex corpus;
  std::map<std::string, std::string> model_hashes;  // tag -> checkpoint content hash

  bool has(ModelTag tag) const;
};

/// Loads whatever artifacts exist in the run directory; missing ones leave gaps.
ModelBundle load_bundle(const RunContext& ctx);

std::shared_ptr<LlmTransport> make_transport(const Json& config);

/// f_n, forecast and source ids for FGPT-2 from a block.
FgptInput fgpt_input(const ModelBundle& bundle, const StoryBlock& block);

}  // namespace plotcast
