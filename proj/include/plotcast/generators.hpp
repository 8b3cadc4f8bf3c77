#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "plotcast/gbm.hpp"
#include "plotcast/jsonl.hpp"
#include "plotcast/plots.hpp"
#include "plotcast/sampling.hpp"
#include "plotcast/text.hpp"
#include "plotcast/transformer.hpp"

namespace plotcast {

enum class ModelTag { GT, RH, RF, FGPT2, PW, LLM };

inline constexpr ModelTag kAllModelTags[] = {ModelTag::GT,    ModelTag::RH, ModelTag::RF,
                                             ModelTag::FGPT2, ModelTag::PW, ModelTag::LLM};

std::string to_string(ModelTag tag);
std::optional<ModelTag> parse_model_tag(std::string_view name);
/// Comma-separated list, e.g. "GT,RH,RF,FGPT2". Throws on unknown tags.
std::vector<ModelTag> parse_model_tags(std::string_view list);

struct Suggestion {
  ModelTag tag = ModelTag::GT;
  std::string text;
  int token_count = 0;
  Json provenance = Json::object();
};

Json suggestion_to_json(const Suggestion& s);
Suggestion suggestion_from_json(const Json& j);

Suggestion ground_truth(const PlotSummary& next_plot);

struct RandomBaselineConfig {
  int history_min = 10;
  int history_max = 20;
  int future_min = 5;
  int future_max = 15;
};

enum class OffsetKind { history, future };

class NoValidOffset : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Valid block indices n - t (history) or n + u (future) present in the book.
std::vector<int> valid_offset_targets(std::span<const PlotSummary> book_plots, int n, OffsetKind kind,
                                      const RandomBaselineConfig& config);

/// Uniform draw over the offsets whose block exists; throws NoValidOffset when none does.
Suggestion random_offset_plot(std::span<const PlotSummary> book_plots, int n, OffsetKind kind,
                              const RandomBaselineConfig& config, std::uint64_t seed);

/// Everything FGPT-2 needs besides the model: the tokens of plot n and both frame vectors.
struct FgptInput {
  std::vector<int> source;
  Eigen::VectorXd frame;
  Eigen::VectorXd forecast;
};

/// Token ids for a plot text, cut to fit the encoder (two slots are kept for frames).
std::vector<int> encode_source(const Vocab& vocab, std::string_view text, int max_len);

/// Target framing [START, y..., END], truncated to max_len including both markers.
std::vector<int> frame_target(const Vocab& vocab, std::string_view text, int max_len);

std::string render_tokens(const Vocab& vocab, std::span<const int> ids);

Suggestion fgpt_generate(const nn::Seq2SeqModel<float>& model, const Vocab& vocab, const FgptInput& input,
                         const SamplerConfig& config);

/// Storyline tokens for a plot, as used to build Plan-and-Write training pairs.
std::vector<std::string> plan_storyline(std::string_view plot_text, int max_phrases);

struct PlanAndWrite {
  const nn::Seq2SeqModel<float>& storyline_model;
  const nn::Seq2SeqModel<float>& plot_model;
  const Vocab& vocab;
};

/// Stage 1 samples a storyline from the source plot; stage 2 realizes it.
Suggestion pw_generate(const PlanAndWrite& models, std::span<const int> source_plot, const SamplerConfig& storyline,
                       const SamplerConfig& plot);

}  // namespace plotcast
