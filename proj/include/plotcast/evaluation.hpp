#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plotcast/generators.hpp"
#include "plotcast/jsonl.hpp"
#include "plotcast/metrics.hpp"
#include "plotcast/plots.hpp"
#include "plotcast/stats.hpp"

namespace plotcast {

struct EvalInstance {
  std::string id;  // "<book_id>:<n>"
  StoryBlock context;
  StoryBlock next;
  PlotSummary context_plot;
  PlotSummary reference;  // ground-truth plot of the next block
  std::map<ModelTag, Suggestion> suggestions;
};

Json instance_to_json(const EvalInstance& instance);
EvalInstance instance_from_json(const Json& j);

struct InstanceFilter {
  int plot_min_words = 25;
  int plot_max_words = 65;
  int block_min_words = 150;
  int block_max_words = 300;
};

int word_count(std::string_view text);

/// Empty when the instance passes, otherwise why it was dropped.
std::optional<std::string> filter_reason(const EvalInstance& instance, const InstanceFilter& filter = {});
std::vector<EvalInstance> filter_eval_instances(std::vector<EvalInstance> instances,
                                                const InstanceFilter& filter = {});

struct ModelMetrics {
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double embed_cosine = 0.0;
  long n = 0;
};

struct MetricReport {
  std::map<ModelTag, ModelMetrics> models;
  std::string encoder;
  long instances = 0;
  std::string config_hash;
};

/// Scores each requested model against the ground-truth plot of the next block.
MetricReport compute_metric_report(std::span<const EvalInstance> instances, std::span<const ModelTag> models,
                                   const TextEncoder& encoder);

Json metric_report_to_json(const MetricReport& report);

/// Row and column labels used by the printed tables.
std::string long_label(ModelTag tag);
std::string short_label(ModelTag tag);

struct TableLayout {
  /// Keep an "n/a" Fusion-Seq row/column for the baseline that is not run.
  bool published_layout = false;
};

/// Rows: requested models in canonical order. Columns: BLEU-4 METEOR ROUGE-L and the encoder cosine.
std::string render_metric_table(const MetricReport& report, std::span<const ModelTag> models,
                                const TableLayout& layout = {});

struct RankTable {
  std::string aspect;
  std::vector<std::string> columns;         // short labels, canonical order
  std::map<std::string, MeanRank> means;    // keyed by model tag name
  std::map<std::pair<std::string, std::string>, TTestResult> tests;  // upper triangle, tag names
  long records = 0;
};

enum class TTestKind { welch, paired };

RankTable build_rank_table(std::span<const RankingRecord> records, const std::string& aspect,
                           TTestKind kind = TTestKind::welch, const TableLayout& layout = {});
std::string render_rank_table(const RankTable& table);
Json rank_table_to_json(const RankTable& table);

/// p below 0.001 prints as "0.001***", otherwise three decimals without the leading zero plus stars.
std::string format_p_value(double p);

/// One follow-up story written after seeing a set of plot ideas (keys: model
/// tag names plus "Random" for the random-paragraph control).
struct StudyRecord {
  std::string instance_id;
  std::string story;
  std::map<std::string, std::string> plots;
};

Json study_to_json(const StudyRecord& r);
StudyRecord study_from_json(const Json& j);

struct StudyAnalysis {
  std::vector<std::string> columns;
  std::map<std::string, double> similarity;
  std::map<std::string, MeanCi> story_coverage;
  std::map<std::string, MeanCi> plot_coverage;
  long records = 0;
};

StudyAnalysis analyze_study(std::span<const StudyRecord> records, const TextEncoder& encoder,
                            const CoverageOptions& coverage_options = {});
std::string render_similarity_table(const StudyAnalysis& analysis);
std::string render_coverage_table(const StudyAnalysis& analysis);
Json study_analysis_to_json(const StudyAnalysis& analysis);

/// Rows per model: inspiring share, then Most/Least/Overall per aspect.
std::string render_questionnaire_table(const std::map<std::string, ModelQuestionnaire>& scores);
Json questionnaire_scores_to_json(const std::map<std::string, ModelQuestionnaire>& scores);

/// Paragraphs of 30-50 words cut from sentence streams, used as the random control.
std::vector<std::string> random_paragraph_pool(std::span<const StoryBlock> blocks, int min_words = 30,
                                               int max_words = 50);

}  // namespace plotcast
