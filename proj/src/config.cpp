#include "plotcast/config.hpp"

#include <sstream>
#include <thread>

#ifndef PLOTCAST_DATA_DIR
#define PLOTCAST_DATA_DIR "data"
#endif

namespace plotcast {

namespace fs = std::filesystem;

Json default_config() {
  const fs::path data = PLOTCAST_DATA_DIR;
  Json model = {{"d_model", 64},  {"n_heads", 4},      {"n_layers_enc", 2},   {"n_layers_dec", 2},
                {"d_ff", 128},    {"max_src_len", 96}, {"max_tgt_len", 96},   {"dropout", 0.0}};
  Json train = {{"steps", 1200},       {"batch_size", 32},    {"lr", 3e-4},          {"weight_decay", 1e-4},
                {"beta1", 0.9},        {"beta2", 0.999},      {"eps", 1e-8},         {"warmup", 50},
                {"cosine", true},      {"log_every", 50},     {"eval_every", 200},   {"threads", 0}};
  return Json{
      {"seed", 13},
      {"data",
       {{"books", (data / "books").string()},
        {"lexicon", (data / "lexicon" / "desk_frames_64.tsv").string()},
        {"stopwords", (data / "stopwords.txt").string()},
        {"abbreviations", (data / "abbreviations.txt").string()}}},
      {"corpus",
       {{"block_size", 20},
        {"min_freq", 3},
        {"split", {0.7, 0.1, 0.2}},
        {"chapter_pattern", R"(^\s*chapter\b)"}}},
      {"forecaster",
       {{"n_estimators", 100},
        {"max_depth", 5},
        {"max_leaves", 5},
        {"learning_rate", 0.1},
        {"min_samples_leaf", 2},
        {"teacher_frames", false}}},
      {"fgpt", {{"model", model}, {"train", train}}},
      {"pw", {{"storyline_phrases", 6}, {"model", model}, {"train", train}}},
      {"sampler",
       {{"top_k", 100},
        {"temperature", 0.8},
        {"repetition_penalty", 3.0},
        {"min_len", 36},
        {"max_len", 76},
        {"ban_unk", true}}},
      {"storyline_sampler",
       {{"top_k", 100},
        {"temperature", 0.8},
        {"repetition_penalty", 3.0},
        {"min_len", 0},
        {"max_len", 12},
        {"ban_unk", true}}},
      {"baselines", {{"history", {10, 20}}, {"future", {5, 15}}}},
      {"evaluation",
       {{"models", "GT,RH,RF,PW,FGPT2"},
        {"encoder", "tfidf_bag"},
        {"max_instances", 0},
        {"published_layout", false},
        {"ttest", "welch"},
        {"filter",
         {{"plot_min_words", 25}, {"plot_max_words", 65}, {"block_min_words", 150}, {"block_max_words", 300}}}}},
      {"llm",
       {{"transport", "mock"},
        {"canned", ""},
        {"model", "text-davinci-002"},
        {"temperature", 0.95},
        {"top_p", 0.95},
        {"max_tokens", 76},
        {"frequency_penalty", 0.5},
        {"presence_penalty", 0.5},
        {"best_of", 5},
        {"timeout_ms", 10000},
        {"max_retries", 2},
        {"max_in_flight", 4}}},
      {"service", {{"host", "127.0.0.1"}, {"port", 8080}, {"static_dir", ""}, {"include_timing", false}}},
  };
}

namespace {

void absolutize_data_paths(Json& patch, const fs::path& base) {
  if (!patch.contains("data") || !patch["data"].is_object()) return;
  for (auto& [key, value] : patch["data"].items()) {
    if (!value.is_string()) continue;
    fs::path p = value.get<std::string>();
    if (p.is_relative()) value = (base / p).lexically_normal().string();
  }
}

void check_known_keys(const Json& defaults, const Json& patch, const std::string& prefix) {
  for (const auto& [key, value] : patch.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + prefix + key + "'");
    if (value.is_object() && defaults[key].is_object()) check_known_keys(defaults[key], value, prefix + key + ".");
  }
}

}  // namespace

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json* node = &config;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  if (node->is_string() && !value.is_string()) value = raw;
  *node = value;
}

Json load_config(const std::optional<fs::path>& file, std::span<const std::string> overrides, const Json* base) {
  Json config = default_config();
  if (base) {
    check_known_keys(config, *base, "");
    config.merge_patch(*base);
  }
  if (file) {
    Json patch;
    try {
      patch = Json::parse(read_text(*file));
    } catch (const Json::parse_error& e) {
      throw ConfigError("config " + file->string() + " is not valid JSON: " + e.what());
    }
    if (!patch.is_object()) throw ConfigError("config " + file->string() + " must be a JSON object");
    check_known_keys(config, patch, "");
    absolutize_data_paths(patch, fs::absolute(*file).parent_path());
    config.merge_patch(patch);
  }
  for (const auto& o : overrides) apply_override(config, o);
  if (config.contains("data"))
    for (auto& [key, value] : config["data"].items())
      if (value.is_string() && fs::path(value.get<std::string>()).is_relative())
        value = fs::absolute(value.get<std::string>()).lexically_normal().string();
  return config;
}

std::string config_hash(const Json& config) {
  Json relevant = Json::object();
  for (const char* key : {"seed", "data", "corpus", "forecaster", "fgpt", "pw"})
    if (config.contains(key)) relevant[key] = config[key];
  return hex64(fnv1a(relevant.dump())).substr(0, 12);
}

fs::path data_path(const Json& config, const std::string& key) { return config.at("data").at(key).get<std::string>(); }

SegmenterOptions segmenter_options(const Json& config) {
  SegmenterOptions o;
  o.chapter_pattern = config.at("corpus").value("chapter_pattern", o.chapter_pattern);
  const fs::path abbrev = data_path(config, "abbreviations");
  if (!abbrev.empty() && fs::exists(abbrev)) o.abbreviations = load_abbreviations(abbrev.string());
  return o;
}

SplitRatios split_ratios(const Json& config) {
  const auto r = config.at("corpus").at("split").get<std::vector<double>>();
  if (r.size() != 3) throw ConfigError("corpus.split must list three ratios");
  return {r[0], r[1], r[2]};
}

GbmConfig gbm_config(const Json& config) {
  const Json& f = config.at("forecaster");
  GbmConfig g;
  g.n_estimators = f.value("n_estimators", g.n_estimators);
  g.max_depth = f.value("max_depth", g.max_depth);
  g.max_leaves = f.value("max_leaves", g.max_leaves);
  g.learning_rate = f.value("learning_rate", g.learning_rate);
  g.min_samples_leaf = f.value("min_samples_leaf", g.min_samples_leaf);
  return g;
}

nn::ModelConfig model_config(const Json& section, int vocab_size, int frame_dim) {
  Json j = section;
  j["vocab_size"] = vocab_size;
  j["frame_dim"] = frame_dim;
  j["use_frames"] = frame_dim > 0;
  return nn::config_from_json(j);
}

nn::TrainConfig train_config(const Json& s, std::uint64_t seed) {
  nn::TrainConfig t;
  t.steps = s.value("steps", t.steps);
  t.batch_size = s.value("batch_size", t.batch_size);
  t.adamw.lr = s.value("lr", t.adamw.lr);
  t.adamw.weight_decay = s.value("weight_decay", t.adamw.weight_decay);
  t.adamw.beta1 = s.value("beta1", t.adamw.beta1);
  t.adamw.beta2 = s.value("beta2", t.adamw.beta2);
  t.adamw.eps = s.value("eps", t.adamw.eps);
  t.warmup = s.value("warmup", t.warmup);
  t.cosine = s.value("cosine", t.cosine);
  t.log_every = s.value("log_every", t.log_every);
  t.eval_every = s.value("eval_every", t.eval_every);
  t.threads = s.value("threads", 0);
  if (t.threads <= 0) t.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  t.seed = seed;
  return t;
}

SamplerConfig sampler_config(const Json& s) {
  SamplerConfig c;
  c.top_k = s.value("top_k", c.top_k);
  c.temperature = s.value("temperature", c.temperature);
  c.repetition_penalty = s.value("repetition_penalty", c.repetition_penalty);
  c.min_len = s.value("min_len", c.min_len);
  c.max_len = s.value("max_len", c.max_len);
  c.ban_unk = s.value("ban_unk", c.ban_unk);
  c.validate();
  return c;
}

RandomBaselineConfig baseline_config(const Json& config) {
  const auto h = config.at("baselines").at("history").get<std::vector<int>>();
  const auto f = config.at("baselines").at("future").get<std::vector<int>>();
  if (h.size() != 2 || f.size() != 2) throw ConfigError("baselines ranges must be [min, max] pairs");
  return {h[0], h[1], f[0], f[1]};
}

InstanceFilter instance_filter(const Json& config) {
  const Json& f = config.at("evaluation").at("filter");
  InstanceFilter out;
  out.plot_min_words = f.value("plot_min_words", out.plot_min_words);
  out.plot_max_words = f.value("plot_max_words", out.plot_max_words);
  out.block_min_words = f.value("block_min_words", out.block_min_words);
  out.block_max_words = f.value("block_max_words", out.block_max_words);
  return out;
}

LlmParams llm_params(const Json& config) {
  const Json& l = config.at("llm");
  LlmParams p;
  p.model = l.value("model", p.model);
  p.temperature = l.value("temperature", p.temperature);
  p.top_p = l.value("top_p", p.top_p);
  p.max_tokens = l.value("max_tokens", p.max_tokens);
  p.frequency_penalty = l.value("frequency_penalty", p.frequency_penalty);
  p.presence_penalty = l.value("presence_penalty", p.presence_penalty);
  p.best_of = l.value("best_of", p.best_of);
  return p;
}

}  // namespace plotcast
