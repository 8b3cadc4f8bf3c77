#include "plotcast/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

namespace plotcast {

Json instance_to_json(const EvalInstance& in) {
  Json suggestions = Json::object();
  for (const auto& [tag, s] : in.suggestions) suggestions[to_string(tag)] = suggestion_to_json(s);
  return Json{{"id", in.id},
              {"context", block_to_json(in.context)},
              {"next", block_to_json(in.next)},
              {"context_plot", plot_to_json(in.context_plot)},
              {"reference", plot_to_json(in.reference)},
              {"suggestions", suggestions}};
}

EvalInstance instance_from_json(const Json& j) {
  EvalInstance in;
  in.id = j.at("id").get<std::string>();
  in.context = block_from_json(j.at("context"));
  in.next = block_from_json(j.at("next"));
  in.context_plot = plot_from_json(j.at("context_plot"));
  in.reference = plot_from_json(j.at("reference"));
  for (const auto& [tag, s] : j.at("suggestions").items()) {
    auto parsed = suggestion_from_json(s);
    if (to_string(parsed.tag) != tag) throw std::runtime_error("suggestion tag mismatch in instance " + in.id);
    in.suggestions[parsed.tag] = std::move(parsed);
  }
  return in;
}

int word_count(std::string_view text) {
  const auto tokens = tokenize(text);
  return count_words(tokens);
}

std::optional<std::string> filter_reason(const EvalInstance& in, const InstanceFilter& f) {
  const int block_words = in.context.word_count();
  if (block_words < f.block_min_words || block_words > f.block_max_words)
    return "context block has " + std::to_string(block_words) + " words";
  if (in.context.chapter_id != in.next.chapter_id) return "blocks cross a chapter boundary";
  auto check_plot = [&](const std::string& what, std::string_view text) -> std::optional<std::string> {
    const int w = word_count(text);
    if (w < f.plot_min_words || w > f.plot_max_words) return what + " plot has " + std::to_string(w) + " words";
    return std::nullopt;
  };
  if (auto r = check_plot("reference", in.reference.text)) return r;
  for (const auto& [tag, s] : in.suggestions)
    if (auto r = check_plot(to_string(tag), s.text)) return r;
  return std::nullopt;
}

std::vector<EvalInstance> filter_eval_instances(std::vector<EvalInstance> instances, const InstanceFilter& filter) {
  std::erase_if(instances, [&](const EvalInstance& in) { return filter_reason(in, filter).has_value(); });
  return instances;
}

MetricReport compute_metric_report(std::span<const EvalInstance> instances, std::span<const ModelTag> models,
                                   const TextEncoder& encoder) {
  MetricReport report;
  report.encoder = encoder.name();
  report.instances = static_cast<long>(instances.size());
  for (ModelTag tag : models) {
    std::vector<Tokens> hyps, refs;
    double cos_sum = 0;
    for (const auto& in : instances) {
      auto it = in.suggestions.find(tag);
      if (it == in.suggestions.end()) continue;
      hyps.push_back(tokenize(it->second.text));
      refs.push_back(tokenize(in.reference.text));
      cos_sum += encoder.cosine(hyps.back(), refs.back());
    }
    ModelMetrics m;
    m.n = static_cast<long>(hyps.size());
    if (!hyps.empty()) {
      m.bleu4 = bleu4(hyps, refs);
      m.meteor = meteor_corpus(hyps, refs);
      m.rouge_l = rouge_l_corpus(hyps, refs);
      m.embed_cosine = cos_sum / static_cast<double>(hyps.size());
    }
    report.models[tag] = m;
  }
  return report;
}

Json metric_report_to_json(const MetricReport& r) {
  Json models = Json::object();
  for (const auto& [tag, m] : r.models)
    models[to_string(tag)] = Json{{"bleu4", m.bleu4},
                                  {"meteor_lite", m.meteor},
                                  {"rouge_l", m.rouge_l},
                                  {"embed_cosine", m.embed_cosine},
                                  {"n", m.n}};
  return Json{{"models", models}, {"encoder", r.encoder}, {"instances", r.instances}, {"config_hash", r.config_hash}};
}

std::string long_label(ModelTag tag) {
  switch (tag) {
    case ModelTag::GT: return "Ground-Truth";
    case ModelTag::RH: return "Rand-History";
    case ModelTag::RF: return "Rand-Future";
    case ModelTag::PW: return "P&W";
    case ModelTag::FGPT2: return "FGPT-2";
    case ModelTag::LLM: return "GPT-3";
  }
  return "?";
}

std::string short_label(ModelTag tag) {
  switch (tag) {
    case ModelTag::GT: return "GT";
    case ModelTag::RH: return "RH";
    case ModelTag::RF: return "RF";
    case ModelTag::PW: return "P&W";
    case ModelTag::FGPT2: return "FGPT-2";
    case ModelTag::LLM: return "GPT-3";
  }
  return "?";
}

namespace {

constexpr const char* kFusionLong = "Fusion-Seq";
constexpr const char* kFusionShort = "Fusion";
constexpr const char* kNotRun = "n/a";

// Canonical order with the Fusion placeholder slot between RF and P&W.
const std::vector<std::optional<ModelTag>>& canonical_order() {
  static const std::vector<std::optional<ModelTag>> order = {ModelTag::GT,    ModelTag::RH, ModelTag::RF,
                                                             std::nullopt,    ModelTag::PW, ModelTag::FGPT2,
                                                             ModelTag::LLM};
  return order;
}

std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (row.size() == 1) continue;  // full-width divider rows
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out << line << '\n';
  }
  return out.str();
}

std::string fixed(double v, int digits, bool strip_zero) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (strip_zero && s.starts_with("0.")) s.erase(0, 1);
  if (strip_zero && s.starts_with("-0.")) s.erase(1, 1);
  return s;
}

std::string encoder_column(const std::string& encoder) {
  if (encoder == "tfidf_bag") return "TFIDF-COS";
  if (encoder == "model_embedding_mean") return "EMB-COS";
  return encoder;
}

}  // namespace

std::string render_metric_table(const MetricReport& report, std::span<const ModelTag> models,
                                const TableLayout& layout) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"", "BLEU-4", "METEOR", "ROUGE-L", encoder_column(report.encoder)});
  for (const auto& slot : canonical_order()) {
    if (!slot) {
      if (layout.published_layout) rows.push_back({kFusionLong, kNotRun, kNotRun, kNotRun, kNotRun});
      continue;
    }
    if (std::find(models.begin(), models.end(), *slot) == models.end()) continue;
    auto it = report.models.find(*slot);
    if (it == report.models.end() || it->second.n == 0) {
      rows.push_back({long_label(*slot), kNotRun, kNotRun, kNotRun, kNotRun});
      continue;
    }
    const auto& m = it->second;
    rows.push_back({long_label(*slot), fixed(m.bleu4, 4, true), fixed(m.meteor, 4, true), fixed(m.rouge_l, 4, true),
                    fixed(m.embed_cosine, 4, true)});
  }
  return render_grid(rows);
}

std::string format_p_value(double p) {
  if (p < 0.001) return "0.001***";
  return fixed(p, 3, true) + significance_stars(p);
}

RankTable build_rank_table(std::span<const RankingRecord> records, const std::string& aspect, TTestKind kind,
                           const TableLayout& layout) {
  std::vector<RankingRecord> selected;
  for (const auto& r : records)
    if (r.aspect == aspect) selected.push_back(r);
  RankTable table;
  table.aspect = aspect;
  table.means = mean_ranks(selected);
  for (const auto& m : table.means) table.records = std::max(table.records, m.second.count);

  std::vector<std::string> present;
  for (const auto& slot : canonical_order()) {
    if (!slot) {
      if (layout.published_layout) table.columns.push_back(kFusionShort);
      continue;
    }
    if (table.means.count(to_string(*slot))) {
      table.columns.push_back(to_string(*slot));
      present.push_back(to_string(*slot));
    }
  }

  // Ranks of each model per record, aligned for the paired variant.
  for (std::size_t i = 0; i < present.size(); ++i)
    for (std::size_t j = i + 1; j < present.size(); ++j) {
      std::vector<double> a, b;
      for (const auto& r : selected) {
        if (validate_ranking(r)) continue;
        auto ia = r.ranks.find(present[i]);
        auto ib = r.ranks.find(present[j]);
        if (kind == TTestKind::paired) {
          if (ia == r.ranks.end() || ib == r.ranks.end()) continue;
          a.push_back(ia->second);
          b.push_back(ib->second);
        } else {
          if (ia != r.ranks.end()) a.push_back(ia->second);
          if (ib != r.ranks.end()) b.push_back(ib->second);
        }
      }
      if (a.size() < 2 || b.size() < 2) continue;
      table.tests[{present[i], present[j]}] = kind == TTestKind::paired ? paired_ttest(a, b) : welch_ttest(a, b);
    }
  return table;
}

std::string render_rank_table(const RankTable& table) {
  auto label = [](const std::string& col) {
    if (col == kFusionShort) return std::string(kFusionShort);
    return short_label(*parse_model_tag(col));
  };
  std::string corner = table.aspect;
  if (!corner.empty()) corner[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(corner[0])));
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{corner + " (lower is better)"};
  for (const auto& c : table.columns) header.push_back(label(c));
  rows.push_back(header);

  std::vector<std::string> mean_row{"Mean"};
  for (const auto& c : table.columns) {
    auto it = table.means.find(c);
    mean_row.push_back(it == table.means.end() ? kNotRun : fixed(it->second.mean, 3, false));
  }
  rows.push_back(mean_row);
  rows.push_back({"P-values for T-test"});
  for (std::size_t i = 0; i + 1 < table.columns.size(); ++i) {
    std::vector<std::string> row{label(table.columns[i])};
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      if (j <= i) {
        row.push_back("-");
        continue;
      }
      auto it = table.tests.find({table.columns[i], table.columns[j]});
      row.push_back(it == table.tests.end() ? kNotRun : format_p_value(it->second.p_two_sided));
    }
    rows.push_back(row);
  }
  return render_grid(rows);
}

Json rank_table_to_json(const RankTable& t) {
  Json means = Json::object();
  for (const auto& [tag, m] : t.means) means[tag] = Json{{"mean", m.mean}, {"count", m.count}};
  Json tests = Json::array();
  for (const auto& [pair, r] : t.tests)
    tests.push_back(Json{{"a", pair.first},
                         {"b", pair.second},
                         {"t", r.t},
                         {"df", r.df},
                         {"p", r.p_two_sided},
                         {"stars", significance_stars(r.p_two_sided)}});
  return Json{{"aspect", t.aspect}, {"columns", t.columns}, {"mean", means}, {"tests", tests}, {"records", t.records}};
}

Json study_to_json(const StudyRecord& r) {
  return Json{{"instance_id", r.instance_id}, {"story", r.story}, {"plots", r.plots}};
}

StudyRecord study_from_json(const Json& j) {
  return {j.value("instance_id", std::string()), j.at("story").get<std::string>(),
          j.at("plots").get<std::map<std::string, std::string>>()};
}

namespace {

std::string study_label(const std::string& key) {
  if (auto tag = parse_model_tag(key)) return short_label(*tag);
  return key;
}

// Model tags in canonical order, then any other keys alphabetically.
template <typename Map>
std::vector<std::string> ordered_keys(const Map& m) {
  std::vector<std::string> keys;
  for (const auto& slot : canonical_order())
    if (slot && m.count(to_string(*slot))) keys.push_back(to_string(*slot));
  for (const auto& [key, value] : m)
    if (!parse_model_tag(key)) keys.push_back(key);
  return keys;
}

}  // namespace

StudyAnalysis analyze_study(std::span<const StudyRecord> records, const TextEncoder& encoder,
                            const CoverageOptions& coverage_options) {
  StudyAnalysis a;
  a.records = static_cast<long>(records.size());
  std::map<std::string, std::vector<double>> sims, story_cov, plot_cov;
  for (const auto& r : records) {
    const auto story = tokenize(r.story);
    for (const auto& [key, text] : r.plots) {
      const auto plot = tokenize(text);
      sims[key].push_back(encoder.cosine(plot, story));
      const auto c = coverage(story, plot, coverage_options);
      story_cov[key].push_back(c.story_coverage);
      plot_cov[key].push_back(c.plot_coverage);
    }
  }
  for (const auto& slot : canonical_order())
    if (slot && sims.count(to_string(*slot))) a.columns.push_back(to_string(*slot));
  for (const auto& [key, v] : sims)
    if (!parse_model_tag(key)) a.columns.push_back(key);
  for (const auto& key : a.columns) {
    const auto& s = sims[key];
    double sum = 0;
    for (double x : s) sum += x;
    a.similarity[key] = sum / static_cast<double>(s.size());
    a.story_coverage[key] = mean_confidence_interval(story_cov[key]);
    a.plot_coverage[key] = mean_confidence_interval(plot_cov[key]);
  }
  return a;
}

std::string render_similarity_table(const StudyAnalysis& a) {
  std::vector<std::string> header{""}, row{"Similarity"};
  for (const auto& key : a.columns) {
    header.push_back(study_label(key));
    row.push_back(fixed(a.similarity.at(key), 3, false));
  }
  return render_grid({header, row});
}

std::string render_coverage_table(const StudyAnalysis& a) {
  auto ci = [](const MeanCi& c) { return "[" + fixed(c.lo, 3, false) + ", " + fixed(c.hi, 3, false) + "]"; };
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"", "Story Coverage", "", "Plot Coverage", ""});
  rows.push_back({"", "Mean", "CI", "Mean", "CI"});
  for (const auto& key : a.columns) {
    const auto& s = a.story_coverage.at(key);
    const auto& p = a.plot_coverage.at(key);
    rows.push_back({study_label(key), fixed(s.mean, 3, false), ci(s), fixed(p.mean, 3, false), ci(p)});
  }
  return render_grid(rows);
}

std::string render_questionnaire_table(const std::map<std::string, ModelQuestionnaire>& scores) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> top{"", "Inspiring"}, sub{"", ""};
  for (const auto& aspect : kQuestionnaireAspects) {
    std::string name = aspect;
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    top.insert(top.end(), {name, "", ""});
    sub.insert(sub.end(), {"Most", "Least", "Overall"});
  }
  rows.push_back(top);
  rows.push_back(sub);
  for (const auto& key : ordered_keys(scores)) {
    const auto& q = scores.at(key);
    std::vector<std::string> row{study_label(key), fixed(q.inspiring, 3, false)};
    for (const auto& aspect : kQuestionnaireAspects) {
      auto it = q.aspects.find(aspect);
      const AspectScore a = it == q.aspects.end() ? AspectScore{} : it->second;
      row.insert(row.end(), {fixed(a.most, 3, false), fixed(a.least, 3, false), fixed(a.overall, 3, false)});
    }
    rows.push_back(row);
  }
  return render_grid(rows);
}

Json questionnaire_scores_to_json(const std::map<std::string, ModelQuestionnaire>& scores) {
  Json out = Json::object();
  for (const auto& [key, q] : scores) {
    Json aspects = Json::object();
    for (const auto& [aspect, a] : q.aspects)
      aspects[aspect] = Json{{"most", a.most}, {"least", a.least}, {"overall", a.overall}};
    out[key] = Json{{"inspiring", q.inspiring}, {"aspects", aspects}};
  }
  return out;
}

Json study_analysis_to_json(const StudyAnalysis& a) {
  Json out = Json::object();
  for (const auto& key : a.columns) {
    const auto& s = a.story_coverage.at(key);
    const auto& p = a.plot_coverage.at(key);
    out[key] = Json{{"similarity", a.similarity.at(key)},
                    {"story_coverage", {{"mean", s.mean}, {"ci", {s.lo, s.hi}}}},
                    {"plot_coverage", {{"mean", p.mean}, {"ci", {p.lo, p.hi}}}}};
  }
  return Json{{"columns", a.columns}, {"models", out}, {"records", a.records}};
}

std::vector<std::string> random_paragraph_pool(std::span<const StoryBlock> blocks, int min_words, int max_words) {
  std::vector<std::string> pool;
  for (const auto& block : blocks) {
    std::string current;
    int words = 0;
    for (const auto& s : block.sentences) {
      if (words + s.word_count > max_words) {
        current.clear();
        words = 0;
        if (s.word_count > max_words) continue;
      }
      if (!current.empty()) current.push_back(' ');
      current += s.text;
      words += s.word_count;
      if (words >= min_words) {
        pool.push_back(current);
        current.clear();
        words = 0;
      }
    }
  }
  return pool;
}

}  // namespace plotcast
