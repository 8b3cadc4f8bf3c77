#include "plotcast/generators.hpp"

#include <algorithm>

#include "plotcast/detok.hpp"
#include "plotcast/random.hpp"
#include "plotcast/rake.hpp"

namespace plotcast {

std::string to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::GT: return "GT";
    case ModelTag::RH: return "RH";
    case ModelTag::RF: return "RF";
    case ModelTag::FGPT2: return "FGPT2";
    case ModelTag::PW: return "PW";
    case ModelTag::LLM: return "LLM";
  }
  return "?";
}

std::optional<ModelTag> parse_model_tag(std::string_view name) {
  for (ModelTag t : kAllModelTags)
    if (to_string(t) == name) return t;
  return std::nullopt;
}

std::vector<ModelTag> parse_model_tags(std::string_view list) {
  std::vector<ModelTag> tags;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    std::string_view item = list.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      auto tag = parse_model_tag(item);
      if (!tag) throw std::invalid_argument("unknown model tag '" + std::string(item) + "'");
      if (std::find(tags.begin(), tags.end(), *tag) == tags.end()) tags.push_back(*tag);
    }
    start = comma + 1;
  }
  return tags;
}

Json suggestion_to_json(const Suggestion& s) {
  return Json{{"model_tag", to_string(s.tag)},
              {"text", s.text},
              {"token_count", s.token_count},
              {"provenance", s.provenance}};
}

Suggestion suggestion_from_json(const Json& j) {
  Suggestion s;
  const auto tag = parse_model_tag(j.at("model_tag").get<std::string>());
  if (!tag) throw std::runtime_error("unknown model_tag in suggestion record");
  s.tag = *tag;
  s.text = j.at("text").get<std::string>();
  s.token_count = j.value("token_count", static_cast<int>(tokenize(s.text).size()));
  s.provenance = j.value("provenance", Json::object());
  return s;
}

Suggestion ground_truth(const PlotSummary& next_plot) {
  return {ModelTag::GT, next_plot.text, next_plot.token_count,
          Json{{"book_id", next_plot.book_id}, {"block", next_plot.index}}};
}

std::vector<int> valid_offset_targets(std::span<const PlotSummary> book_plots, int n, OffsetKind kind,
                                      const RandomBaselineConfig& config) {
  const int lo = kind == OffsetKind::history ? config.history_min : config.future_min;
  const int hi = kind == OffsetKind::history ? config.history_max : config.future_max;
  if (lo < 1 || hi < lo) throw std::invalid_argument("random baseline offsets must satisfy 1 <= min <= max");
  std::vector<int> targets;
  for (int d = lo; d <= hi; ++d) {
    const int index = kind == OffsetKind::history ? n - d : n + d;
    const bool exists = std::any_of(book_plots.begin(), book_plots.end(),
                                    [&](const PlotSummary& p) { return p.index == index; });
    if (exists) targets.push_back(index);
  }
  return targets;
}

Suggestion random_offset_plot(std::span<const PlotSummary> book_plots, int n, OffsetKind kind,
                              const RandomBaselineConfig& config, std::uint64_t seed) {
  const auto targets = valid_offset_targets(book_plots, n, kind, config);
  if (targets.empty())
    throw NoValidOffset("no valid " + std::string(kind == OffsetKind::history ? "history" : "future") +
                        " offset for block " + std::to_string(n) + "; skip this instance");
  Rng rng(seed);
  const int index = targets[static_cast<std::size_t>(rng.below(targets.size()))];
  const auto& plot = *std::find_if(book_plots.begin(), book_plots.end(),
                                   [&](const PlotSummary& p) { return p.index == index; });
  return {kind == OffsetKind::history ? ModelTag::RH : ModelTag::RF, plot.text, plot.token_count,
          Json{{"book_id", plot.book_id}, {"block", plot.index}, {"offset", std::abs(index - n)}}};
}

std::vector<int> encode_source(const Vocab& vocab, std::string_view text, int max_len) {
  auto ids = vocab.encode(tokenize(text));
  if (max_len >= 0 && static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<std::size_t>(max_len));
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

std::vector<int> frame_target(const Vocab& vocab, std::string_view text, int max_len) {
  auto body = vocab.encode(tokenize(text));
  const auto keep = static_cast<std::size_t>(std::max(max_len - 2, 0));
  if (body.size() > keep) body.resize(keep);
  std::vector<int> target{Vocab::kStart};
  target.insert(target.end(), body.begin(), body.end());
  target.push_back(Vocab::kEnd);
  return target;
}

std::string render_tokens(const Vocab& vocab, std::span<const int> ids) {
  std::vector<std::string> words;
  for (int id : ids)
    if (!Vocab::is_special(id)) words.push_back(vocab.decode(id));
  return detokenize_truecase(words);
}

Suggestion fgpt_generate(const nn::Seq2SeqModel<float>& model, const Vocab& vocab, const FgptInput& input,
                         const SamplerConfig& config) {
  if (model.config().vocab_size != vocab.size())
    throw std::invalid_argument("model vocabulary size " + std::to_string(model.config().vocab_size) +
                                " does not match vocab size " + std::to_string(vocab.size()));
  const auto ids = sample_plot(model, input.source, input.frame, input.forecast, config);
  return {ModelTag::FGPT2, render_tokens(vocab, ids), static_cast<int>(ids.size()),
          Json{{"sampler_seed", config.seed}, {"detokenized", true}}};
}

std::vector<std::string> plan_storyline(std::string_view plot_text, int max_phrases) {
  return rake_keywords(plot_text, max_phrases);
}

Suggestion pw_generate(const PlanAndWrite& models, std::span<const int> source_plot, const SamplerConfig& storyline,
                       const SamplerConfig& plot) {
  for (const auto* m : {&models.storyline_model, &models.plot_model})
    if (m->config().vocab_size != models.vocab.size())
      throw std::invalid_argument("plan-and-write model does not match the vocabulary");
  const Eigen::VectorXd none;
  std::vector<int> line = sample_plot(models.storyline_model, source_plot, none, none, storyline);
  Json provenance{{"sampler_seed", plot.seed}, {"storyline_seed", storyline.seed}, {"detokenized", true}};
  std::vector<int> stage2_source = line;
  if (line.empty()) {
    // An all-PAD source is fully masked, so stage 2 runs unconditioned.
    stage2_source = {Vocab::kPad};
    provenance["storyline_fallback"] = true;
  }
  provenance["storyline"] = models.vocab.decode(line);
  const auto ids = sample_plot(models.plot_model, stage2_source, none, none, plot);
  return {ModelTag::PW, render_tokens(models.vocab, ids), static_cast<int>(ids.size()), std::move(provenance)};
}

}  // namespace plotcast
